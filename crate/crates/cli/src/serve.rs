//! `peel serve`: the debug protocol over WebSocket or stdio, plus static
//! files for a browser front end.

use std::fs;
use std::io::{self, BufRead, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Component, Path, PathBuf};
use std::thread;

use tungstenite::Message;

use peel_core::debug::Session;
use peel_core::machine::MachineConfig;

pub const SESSION_PATH: &str = "/session";

/// Served at `/` when no asset directory is given.
const FALLBACK_PAGE: &str = r#"<!doctype html>
<html><head><meta charset="utf-8"><title>peel</title></head>
<body>
<h1>peel debug service</h1>
<p>Connect a WebSocket client to <code>/session</code> and send JSON commands, e.g.
<code>{"cmd":"get_snapshot"}</code>.</p>
<textarea id="cmd" rows="3" cols="80">{"cmd":"get_snapshot"}</textarea><br>
<button onclick="ws.send(document.getElementById('cmd').value)">send</button>
<pre id="log"></pre>
<script>
const ws = new WebSocket(`ws://${location.host}/session`);
ws.onmessage = (e) => { document.getElementById('log').textContent = e.data + "\n" + document.getElementById('log').textContent; };
</script>
</body></html>
"#;

/// Newline-delimited JSON on stdin/stdout; one line in, one or more out.
pub fn stdio(config: MachineConfig) -> io::Result<()> {
    let mut session = Session::new(config).map_err(io::Error::other)?;
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    for line in stdin.lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        for msg in session.handle_json(&line) {
            writeln!(out, "{msg}")?;
        }
        out.flush()?;
    }
    Ok(())
}

pub fn websocket(config: MachineConfig, port: u16, assets: Option<PathBuf>) -> io::Result<()> {
    let listener = TcpListener::bind(("127.0.0.1", port))?;
    eprintln!("peel: serving on http://{}/ (protocol at {SESSION_PATH})", listener.local_addr()?);
    serve_on(listener, config, assets)
}

/// Accept loop; each connection gets its own thread, and each WebSocket
/// connection its own session.
pub fn serve_on(listener: TcpListener, config: MachineConfig, assets: Option<PathBuf>) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                eprintln!("peel: accept failed: {e}");
                continue;
            }
        };
        let config = config.clone();
        let assets = assets.clone();
        thread::spawn(move || {
            if let Err(e) = connection(stream, config, assets.as_deref()) {
                eprintln!("peel: connection error: {e}");
            }
        });
    }
    Ok(())
}

/// Reads the request head without consuming it so the WebSocket handshake
/// can still parse it.
fn peek_head(stream: &TcpStream) -> io::Result<String> {
    let mut buf = vec![0u8; 8192];
    for _ in 0..200 {
        let n = stream.peek(&mut buf)?;
        if n == 0 {
            break;
        }
        if let Some(end) = buf[..n].windows(4).position(|w| w == b"\r\n\r\n") {
            return Ok(String::from_utf8_lossy(&buf[..end]).into_owned());
        }
        if n == buf.len() {
            break;
        }
        thread::sleep(std::time::Duration::from_millis(5));
    }
    Err(io::Error::new(io::ErrorKind::InvalidData, "incomplete HTTP request"))
}

fn connection(mut stream: TcpStream, config: MachineConfig, assets: Option<&Path>) -> io::Result<()> {
    let head = peek_head(&stream)?;
    let mut parts = head.lines().next().unwrap_or_default().split_whitespace();
    let (method, target) = (parts.next().unwrap_or_default(), parts.next().unwrap_or("/"));
    let path = target.split('?').next().unwrap_or("/");

    if path == SESSION_PATH {
        let mut ws = tungstenite::accept(stream).map_err(io::Error::other)?;
        let mut session = Session::new(config).map_err(io::Error::other)?;
        loop {
            let msg = match ws.read() {
                Ok(m) => m,
                Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
                Err(e) => return Err(io::Error::other(e)),
            };
            let text = match msg {
                Message::Text(t) => t,
                Message::Binary(b) => String::from_utf8_lossy(&b).into_owned(),
                Message::Close(_) => return Ok(()),
                _ => continue,
            };
            for reply in session.handle_json(&text) {
                ws.send(Message::Text(reply.to_string())).map_err(io::Error::other)?;
            }
        }
    }

    // Plain HTTP: drain the head we peeked, then answer.
    let mut sink = vec![0u8; head.len() + 4];
    stream.read_exact(&mut sink)?;
    if method != "GET" && method != "HEAD" {
        return respond(&mut stream, "405 Method Not Allowed", "text/plain", b"method not allowed\n");
    }
    match static_file(assets, path) {
        Some((body, mime)) => respond(&mut stream, "200 OK", mime, &body),
        None => respond(&mut stream, "404 Not Found", "text/plain", b"not found\n"),
    }
}

fn respond(stream: &mut TcpStream, status: &str, mime: &str, body: &[u8]) -> io::Result<()> {
    write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: {mime}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    )?;
    stream.write_all(body)?;
    stream.flush()
}

fn static_file(assets: Option<&Path>, path: &str) -> Option<(Vec<u8>, &'static str)> {
    let rel = path.trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let Some(root) = assets else {
        return (rel == "index.html").then(|| (FALLBACK_PAGE.as_bytes().to_vec(), "text/html; charset=utf-8"));
    };
    let rel = Path::new(rel);
    // refuse anything that could climb out of the asset root
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return None;
    }
    let body = fs::read(root.join(rel)).ok()?;
    Some((body, mime_for(rel)))
}

fn mime_for(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or_default() {
        "html" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript",
        "css" => "text/css",
        "json" => "application/json",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "wasm" => "application/wasm",
        _ => "application/octet-stream",
    }
}
