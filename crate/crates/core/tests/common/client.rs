//! Websocket client helpers and the message fuzzer.

use std::net::TcpStream;
use std::time::{Duration, Instant};

use advmimic::service::wire::{Envelope, ServerMessage};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

pub type Client = WebSocket<MaybeTlsStream<TcpStream>>;

pub fn fuzz_message(rng: &mut ChaCha8Rng) -> String {
    const SEEDS: &[&str] = &[
        r#"{"type":"request_switch","target":"walk"}"#,
        r#"{"type":"perturb","impulse":[10.5,-3],"link":"torso"}"#,
        r#"{"type":"pause"}"#,
        r#"{"type":"resume"}"#,
        r#"{"type":"reset","policy":"walk"}"#,
    ];
    const ALPHABET: &[u8] = b"{}[]\":,0123456789.-eE truefalsnul\\type";
    let mut bytes = SEEDS[rng.random_range(0..SEEDS.len())].as_bytes().to_vec();
    match rng.random_range(0..4) {
        0 => {
            let n = rng.random_range(0..64);
            bytes = (0..n).map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())]).collect();
        }
        _ => {
            for _ in 0..rng.random_range(1..6) {
                let i = rng.random_range(0..=bytes.len());
                match rng.random_range(0..3) {
                    0 if i < bytes.len() => {
                        bytes.remove(i);
                    }
                    1 if i < bytes.len() => bytes[i] = ALPHABET[rng.random_range(0..ALPHABET.len())],
                    _ => bytes.insert(i, ALPHABET[rng.random_range(0..ALPHABET.len())]),
                }
            }
        }
    }
    String::from_utf8_lossy(&bytes).into_owned()
}

pub fn connect(addr: std::net::SocketAddr) -> Client {
    let (ws, _) = tungstenite::connect(format!("ws://{addr}")).unwrap();
    if let MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    }
    ws
}

pub fn recv(ws: &mut Client) -> Envelope {
    loop {
        match ws.read().unwrap() {
            Message::Text(t) => return serde_json::from_str(t.as_str()).unwrap(),
            _ => continue,
        }
    }
}

pub fn recv_until(ws: &mut Client, pred: impl Fn(&ServerMessage) -> bool) -> Vec<Envelope> {
    let mut seen = Vec::new();
    let deadline = Instant::now() + Duration::from_secs(10);
    while Instant::now() < deadline {
        let e = recv(ws);
        let hit = pred(&e.body);
        seen.push(e);
        if hit {
            return seen;
        }
    }
    panic!("no matching message");
}
