//! Hosting a toy model over the adapter protocol.

use std::io::{self, BufRead, Write};

use diacritic_core::toy::ToyServer;

use crate::{Failure, EXIT_USAGE};

/// One JSON request per input line, one response per output line, until EOF.
pub fn stdio(server: &ToyServer) -> io::Result<()> {
    let stdin = io::stdin();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for line in stdin.lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writeln!(out, "{}", server.handle_line(&line))?;
        out.flush()?;
    }
    Ok(())
}

/// Each POST body is one request; the response body is one response.
pub fn http(server: ToyServer, addr: &str) -> Result<(), Failure> {
    let listener = tiny_http::Server::http(addr).map_err(|e| Failure(EXIT_USAGE, format!("cannot listen on {addr}: {e}")))?;
    eprintln!("listening on http://{}", listener.server_addr());
    let json = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header");
    for mut request in listener.incoming_requests() {
        let mut body = String::new();
        let response = match request.as_reader().read_to_string(&mut body) {
            Ok(_) => tiny_http::Response::from_string(server.handle_line(&body)).with_header(json.clone()),
            Err(e) => tiny_http::Response::from_string(e.to_string()).with_status_code(400),
        };
        if let Err(e) = request.respond(response) {
            log::warn!("failed to respond: {e}");
        }
    }
    Ok(())
}
