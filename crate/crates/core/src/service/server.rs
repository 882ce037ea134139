//! One TCP port serves both the control-panel bundle over plain HTTP and the
//! command protocol over WebSocket (any request carrying `Upgrade: websocket`).
//! One WebSocket client is attached at a time; a new connection replaces it.

use std::io::{ErrorKind, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use tungstenite::{Message, WebSocket};

use super::Service;
use crate::error::Result;

const HEADER_LIMIT: usize = 16 * 1024;
const CLIENT_POLL: Duration = Duration::from_millis(5);

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or_default() {
        "html" | "htm" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript; charset=utf-8",
        "css" => "text/css; charset=utf-8",
        "json" | "map" => "application/json",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "ico" => "image/x-icon",
        "wasm" => "application/wasm",
        "txt" => "text/plain; charset=utf-8",
        _ => "application/octet-stream",
    }
}

/// Map a request path to a file under `root`, refusing anything that climbs out.
pub fn resolve_static(root: &Path, request_path: &str) -> Option<PathBuf> {
    let path = request_path.split(['?', '#']).next().unwrap_or("/");
    let rel = path.trim_start_matches('/');
    let rel = if rel.is_empty() || rel.ends_with('/') {
        format!("{rel}index.html")
    } else {
        rel.to_string()
    };
    let rel = Path::new(&rel);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return None;
    }
    let full = root.join(rel);
    full.is_file().then_some(full)
}

fn write_response(stream: &mut TcpStream, status: &str, ctype: &str, body: &[u8], with_body: bool) -> std::io::Result<()> {
    write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: {ctype}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    )?;
    if with_body {
        stream.write_all(body)?;
    }
    stream.flush()
}

fn serve_http(mut stream: TcpStream, head: &str, static_dir: Option<&Path>) -> std::io::Result<()> {
    // drain the request we only peeked at
    let mut sink = vec![0u8; head.len()];
    let _ = stream.read_exact(&mut sink);
    let mut parts = head.lines().next().unwrap_or_default().split_whitespace();
    let (method, target) = (parts.next().unwrap_or_default(), parts.next().unwrap_or("/"));
    if method != "GET" && method != "HEAD" {
        return write_response(&mut stream, "405 Method Not Allowed", "text/plain", b"method not allowed\n", true);
    }
    match static_dir.and_then(|d| resolve_static(d, target)) {
        Some(file) => {
            let body = std::fs::read(&file)?;
            write_response(&mut stream, "200 OK", content_type(&file), &body, method == "GET")
        }
        None => write_response(&mut stream, "404 Not Found", "text/plain", b"not found\n", method == "GET"),
    }
}

/// Wait for the full request head without consuming it.
fn peek_head(stream: &TcpStream) -> std::io::Result<String> {
    stream.set_read_timeout(Some(Duration::from_secs(2)))?;
    let mut buf = vec![0u8; HEADER_LIMIT];
    let until = Instant::now() + Duration::from_secs(2);
    loop {
        let n = stream.peek(&mut buf)?;
        if let Some(end) = buf[..n].windows(4).position(|w| w == b"\r\n\r\n") {
            return Ok(String::from_utf8_lossy(&buf[..end + 4]).into_owned());
        }
        if n == 0 || n == buf.len() || Instant::now() > until {
            return Err(std::io::Error::new(ErrorKind::InvalidData, "incomplete request head"));
        }
        std::thread::sleep(Duration::from_millis(2));
    }
}

fn is_upgrade(head: &str) -> bool {
    head.lines().any(|l| {
        let l = l.to_ascii_lowercase();
        l.starts_with("upgrade:") && l.contains("websocket")
    })
}

fn send_json<T: serde::Serialize>(ws: &mut WebSocket<TcpStream>, value: &T) -> bool {
    match serde_json::to_string(value) {
        Ok(text) => ws.send(Message::Text(text)).is_ok(),
        Err(_) => true,
    }
}

/// Serve until `stop` is raised.
pub fn serve(service: &mut Service, listener: TcpListener, static_dir: Option<&Path>, stop: &AtomicBool) -> Result<()> {
    listener.set_nonblocking(true)?;
    let mut client: Option<WebSocket<TcpStream>> = None;
    while !stop.load(Ordering::Acquire) {
        let mut active = false;
        match listener.accept() {
            Ok((stream, _)) => {
                active = true;
                stream.set_nonblocking(false)?;
                if let Ok(head) = peek_head(&stream) {
                    if is_upgrade(&head) {
                        if let Ok(ws) = tungstenite::accept(stream) {
                            ws.get_ref().set_read_timeout(Some(CLIENT_POLL))?;
                            client = Some(ws);
                            let state = service.state_json();
                            if let Some(ws) = client.as_mut() {
                                send_json(ws, &serde_json::json!({ "event": "hello", "data": state }));
                            }
                        }
                    } else {
                        let _ = serve_http(stream, &head, static_dir);
                    }
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => {}
            Err(e) => return Err(e.into()),
        }

        let mut drop_client = false;
        if let Some(ws) = client.as_mut() {
            match ws.read() {
                Ok(Message::Text(text)) => {
                    active = true;
                    let reply = service.handle_text(&text);
                    drop_client = !send_json(ws, &reply);
                }
                Ok(Message::Close(_)) => drop_client = true,
                Ok(_) => {}
                Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                Err(_) => drop_client = true,
            }
        }
        service.poll();
        let events = service.drain_events();
        if let Some(ws) = client.as_mut() {
            for e in &events {
                if !send_json(ws, e) {
                    drop_client = true;
                    break;
                }
            }
        }
        if drop_client {
            client = None;
        }
        if !active && client.is_none() {
            std::thread::sleep(CLIENT_POLL);
        }
    }
    if let Some(mut ws) = client {
        let _ = ws.close(None);
        let _ = ws.flush();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_paths_stay_inside_root() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("index.html"), "<html></html>").unwrap();
        std::fs::write(dir.path().join("app.js"), "").unwrap();
        assert_eq!(resolve_static(dir.path(), "/"), Some(dir.path().join("index.html")));
        assert_eq!(resolve_static(dir.path(), "/app.js?v=2"), Some(dir.path().join("app.js")));
        assert_eq!(resolve_static(dir.path(), "/../etc/passwd"), None);
        assert_eq!(resolve_static(dir.path(), "/missing.css"), None);
    }

    #[test]
    fn upgrade_detection() {
        assert!(is_upgrade("GET /ws HTTP/1.1\r\nUpgrade: WebSocket\r\n\r\n"));
        assert!(!is_upgrade("GET / HTTP/1.1\r\nHost: x\r\n\r\n"));
    }
}
