//! Deterministic bitmap rendering of text onto fixed-width canvases, and the
//! chunking policy that splits long text across canvases.

mod chunk;
pub mod glyphs;
mod image;

pub use chunk::{chunk, reassemble, text_width, ChunkPlan, Join, ReassembleError};
pub use glyphs::{Cell, CELL_HEIGHT, CELL_WIDTH};
pub use image::ImageError;

use thiserror::Error;

use crate::perturb::is_combining_mark;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("chunk needs {needed} cells but the canvas has {width}")]
    TooWide { needed: usize, width: usize },
    #[error("canvas width must be positive")]
    ZeroWidth,
}

/// A rendered single-line canvas of `width_cells` glyph cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Canvas {
    cells: Vec<Cell>,
    source_chunk: String,
    /// Characters outside the font that were drawn as a tofu box.
    substituted: Vec<char>,
}

impl Canvas {
    pub fn blank(width_cells: usize) -> Self {
        Self {
            cells: vec![Cell::EMPTY; width_cells],
            source_chunk: String::new(),
            substituted: Vec::new(),
        }
    }

    pub(crate) fn from_cells(cells: Vec<Cell>) -> Self {
        Self {
            cells,
            source_chunk: String::new(),
            substituted: Vec::new(),
        }
    }

    pub fn width_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn width_px(&self) -> usize {
        self.cells.len() * CELL_WIDTH
    }

    pub fn height_px(&self) -> usize {
        CELL_HEIGHT
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn source_chunk(&self) -> &str {
        &self.source_chunk
    }

    pub fn substituted(&self) -> &[char] {
        &self.substituted
    }

    pub fn pixel(&self, x: usize, y: usize) -> bool {
        self.cells[x / CELL_WIDTH].get(x % CELL_WIDTH, y)
    }

    /// Pixel rows of the canvas, for debugging and image export.
    pub fn rows(&self) -> impl Iterator<Item = Vec<bool>> + '_ {
        (0..CELL_HEIGHT).map(move |y| (0..self.width_px()).map(|x| self.pixel(x, y)).collect())
    }
}

/// Renders `chunk` onto a canvas `width_cells` cells wide.
///
/// Each base character takes the next cell. Combining marks (U+0300..U+036F)
/// take no cell: they OR their pattern into the cell of the base character
/// they follow, or into cell 0 when nothing precedes them. Double marks also
/// paint into the following cell when it exists.
pub fn render(chunk: &str, width_cells: usize) -> Result<Canvas, RenderError> {
    if width_cells == 0 {
        return Err(RenderError::ZeroWidth);
    }
    let needed = text_width(chunk);
    if needed > width_cells {
        return Err(RenderError::TooWide {
            needed,
            width: width_cells,
        });
    }
    let mut canvas = Canvas::blank(width_cells);
    canvas.source_chunk = chunk.to_owned();
    let mut next_cell = 0usize;
    for c in chunk.chars() {
        if is_combining_mark(c) {
            let target = next_cell.saturating_sub(1);
            let pattern = glyphs::mark_pattern(c).expect("block members always have a pattern");
            canvas.cells[target].0 |= pattern.own.0;
            if let Some(cell) = canvas.cells.get_mut(target + 1) {
                cell.0 |= pattern.next.0;
            }
        } else {
            let cell = glyphs::glyph(c).unwrap_or_else(|| {
                canvas.substituted.push(c);
                glyphs::tofu()
            });
            canvas.cells[next_cell].0 |= cell.0;
            next_cell += 1;
        }
    }
    if !canvas.substituted.is_empty() {
        log::debug!("tofu substituted for {:?}", canvas.substituted);
    }
    Ok(canvas)
}
