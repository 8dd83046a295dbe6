//! Glyph cell layout, ASCII templates, and combining-mark patterns.
//!
//! A cell is 8 px wide and 14 px tall, packed into a `u128` with bit
//! `row * 8 + col`. Rows 0..=3 are the diacritic zone, rows 4..=13 the glyph
//! body. Base glyphs occupy body rows 4..=11; rows 12..=13 hold below-marks.

use std::sync::OnceLock;

use crate::perturb::is_combining_mark;

pub const CELL_WIDTH: usize = 8;
pub const CELL_HEIGHT: usize = 14;
/// First row of the glyph body.
pub const BODY_TOP: usize = 4;
const GLYPH_TOP: usize = BODY_TOP;

/// Printable ASCII range covered by the embedded font.
pub const FIRST_GLYPH: u8 = 0x20;
pub const LAST_GLYPH: u8 = 0x7E;

/// Pixel bits of one cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Cell(pub u128);

impl Cell {
    pub const EMPTY: Cell = Cell(0);

    pub fn get(self, col: usize, row: usize) -> bool {
        debug_assert!(col < CELL_WIDTH && row < CELL_HEIGHT);
        self.0 >> (row * CELL_WIDTH + col) & 1 == 1
    }

    pub fn set(&mut self, col: usize, row: usize) {
        self.0 |= 1 << (row * CELL_WIDTH + col);
    }

    pub fn hamming(self, other: Cell) -> u32 {
        (self.0 ^ other.0).count_ones()
    }

    pub fn ink(self) -> u32 {
        self.0.count_ones()
    }

    /// Mask of full rows `rows`.
    pub fn row_mask(rows: std::ops::RangeInclusive<usize>) -> u128 {
        rows.fold(0, |m, r| m | (0xFFu128 << (r * CELL_WIDTH)))
    }
}

/// Builds a cell from `(row, art)` pairs where `art` is 8 chars, `#` = ink.
fn art(rows: &[(usize, &str)]) -> Cell {
    let mut cell = Cell::EMPTY;
    for &(row, line) in rows {
        debug_assert_eq!(line.len(), CELL_WIDTH);
        for (col, ch) in line.bytes().enumerate() {
            if ch == b'#' {
                cell.set(col, row);
            }
        }
    }
    cell
}

fn ascii_template(byte: u8) -> Cell {
    let bitmap = font8x8::legacy::BASIC_LEGACY[byte as usize];
    let mut cell = Cell::EMPTY;
    for (r, bits) in bitmap.iter().enumerate() {
        for col in 0..CELL_WIDTH {
            if bits >> col & 1 == 1 {
                cell.set(col, GLYPH_TOP + r);
            }
        }
    }
    cell
}

fn templates() -> &'static [Cell; 95] {
    static TEMPLATES: OnceLock<[Cell; 95]> = OnceLock::new();
    TEMPLATES.get_or_init(|| std::array::from_fn(|n| ascii_template(FIRST_GLYPH + n as u8)))
}

/// Clean template of a printable ASCII character.
pub fn glyph(c: char) -> Option<Cell> {
    let b = u32::from(c);
    (u32::from(FIRST_GLYPH)..=u32::from(LAST_GLYPH))
        .contains(&b)
        .then(|| templates()[(b - u32::from(FIRST_GLYPH)) as usize])
}

/// All 95 printable ASCII templates, in code-point order.
pub fn all_glyphs() -> impl Iterator<Item = (char, Cell)> {
    templates()
        .iter()
        .enumerate()
        .map(|(n, &cell)| (char::from(FIRST_GLYPH + n as u8), cell))
}

/// Outline box drawn for characters outside the font.
pub fn tofu() -> Cell {
    art(&[
        (4, ".######."),
        (5, ".#....#."),
        (6, ".#....#."),
        (7, ".#....#."),
        (8, ".#....#."),
        (9, ".#....#."),
        (10, ".#....#."),
        (11, ".######."),
    ])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MarkPlacement {
    Above,
    /// Above-mark tall enough to reach body rows 4..=5.
    TallAbove,
    Below,
    /// Drawn through the glyph body, rows 7..=9.
    Overlay,
}

/// Pixels a mark adds to its own cell and, for double marks, the next one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MarkPattern {
    pub placement: MarkPlacement,
    pub own: Cell,
    pub next: Cell,
}

pub fn placement(c: char) -> MarkPlacement {
    match c as u32 {
        0x0334..=0x0338 => MarkPlacement::Overlay,
        0x0316..=0x0319
        | 0x031C..=0x0333
        | 0x0339..=0x033C
        | 0x0345
        | 0x0347..=0x034E
        | 0x0353..=0x0356
        | 0x0359..=0x035A
        | 0x035C
        | 0x035F
        | 0x0362 => MarkPlacement::Below,
        0x030B | 0x030D | 0x030E | 0x033E | 0x0344 | 0x0363..=0x036F => MarkPlacement::TallAbove,
        _ => MarkPlacement::Above,
    }
}

fn designed(c: char) -> Option<(Cell, Cell)> {
    let own = match c as u32 {
        0x0300 => art(&[(1, "..#....."), (2, "...#....")]),
        0x0301 => art(&[(1, ".....#.."), (2, "....#...")]),
        0x0302 => art(&[(1, "...##..."), (2, "..#..#..")]),
        0x0303 => art(&[(1, "..##..#."), (2, ".#..##..")]),
        0x0304 => art(&[(2, ".######.")]),
        0x0305 => art(&[(0, "########")]),
        0x0306 => art(&[(1, "..#..#.."), (2, "...##...")]),
        0x0307 => art(&[(1, "...##..."), (2, "...##...")]),
        0x0308 => art(&[(1, "..#..#.."), (2, "..#..#..")]),
        0x0309 => art(&[(0, "...##..."), (1, ".....#.."), (2, "....#...")]),
        0x030A => art(&[(0, "...##..."), (1, "..#..#.."), (2, "...##...")]),
        0x030B => art(&[
            (2, "...#..#."),
            (3, "..#..#.."),
            (4, ".#..#..."),
            (5, "#..#...."),
        ]),
        0x030C => art(&[(1, "..#..#.."), (2, "...##...")]),
        0x030D => art(&[(2, "...#...."), (3, "...#...."), (4, "...#...."), (5, "...#....")]),
        0x030E => art(&[(2, "..#..#.."), (3, "..#..#.."), (4, "..#..#.."), (5, "..#..#..")]),
        0x030F => art(&[(1, "#..#...."), (2, ".#..#...")]),
        0x0311 => art(&[(1, "...##..."), (2, "..#..#..")]),
        0x0323 => art(&[(12, "...##..."), (13, "...##...")]),
        0x0324 => art(&[(12, "..#..#.."), (13, "..#..#..")]),
        0x0325 => art(&[(12, "..#..#.."), (13, "...##...")]),
        0x0326 => art(&[(12, "...##..."), (13, "..#.....")]),
        0x0327 => art(&[(12, "....#..."), (13, "..##....")]),
        0x0328 => art(&[(12, "..#....."), (13, "...##...")]),
        0x0330 => art(&[(12, "..##..#."), (13, ".#..##..")]),
        0x0331 => art(&[(12, ".######.")]),
        0x0332 => art(&[(13, "########")]),
        0x0333 => art(&[(12, "########"), (13, "########")]),
        0x0334 => art(&[(7, ".##...#."), (8, "#..#.#.."), (9, "....#...")]),
        0x0335 => art(&[(8, ".######.")]),
        0x0336 => art(&[(8, "########")]),
        0x0337 => art(&[(7, ".....#.."), (8, "....#..."), (9, "...#....")]),
        0x0338 => art(&[(7, "......##"), (8, "...###.."), (9, "##......")]),
        0x0360 => {
            return Some((
                art(&[(1, ".....##."), (2, "....#..#")]),
                art(&[(1, "#......."), (2, ".##.....")]),
            ))
        }
        0x0361 => {
            return Some((
                art(&[(1, ".....###"), (2, "....#...")]),
                art(&[(1, "###....."), (2, "...#....")]),
            ))
        }
        _ => return None,
    };
    Some((own, Cell::EMPTY))
}

/// Pattern from the low bits of the code point: a 4×3 block (4×2 below the
/// base line) in columns 2..=5.
fn derived(c: char, placement: MarkPlacement) -> Cell {
    let cp = c as u32;
    let (top, rows, bits) = match placement {
        MarkPlacement::Above => (1, 3, cp & 0xFFF),
        MarkPlacement::TallAbove => (3, 3, cp & 0xFFF),
        MarkPlacement::Overlay => (7, 3, cp & 0xFFF),
        MarkPlacement::Below => {
            let b = cp & 0xFF;
            (12, 2, if b == 0 { 0xF } else { b })
        }
    };
    let mut cell = Cell::EMPTY;
    for r in 0..rows {
        for col in 0..4 {
            if bits >> (r * 4 + col) & 1 == 1 {
                cell.set(2 + col as usize, top + r as usize);
            }
        }
    }
    cell
}

fn build_pattern(c: char) -> MarkPattern {
    let placement = placement(c);
    let (own, next) = designed(c).unwrap_or_else(|| (derived(c, placement), Cell::EMPTY));
    MarkPattern {
        placement,
        own,
        next,
    }
}

/// Pattern for any scalar in the combining diacritical marks block.
pub fn mark_pattern(c: char) -> Option<MarkPattern> {
    static PATTERNS: OnceLock<Vec<MarkPattern>> = OnceLock::new();
    if !is_combining_mark(c) {
        return None;
    }
    let table = PATTERNS.get_or_init(|| {
        (0x0300..=0x036Fu32)
            .filter_map(char::from_u32)
            .map(build_pattern)
            .collect()
    });
    Some(table[(c as u32 - 0x0300) as usize])
}
