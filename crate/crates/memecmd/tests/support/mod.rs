//! Shared helpers for the integration suites.

#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use memecmd_core::library::{MemeEmbeddings, MemeLibrary, MemeRecord};
use memecmd_core::mock::mock_embed;
use memecmd_core::vector::Vector;

fn quantized(text: &str, dim: usize) -> Vector {
    mock_embed(text, dim).quantized()
}

/// Builds an embedded in-memory library with deterministic mock vectors.
pub fn embedded_library(n: usize, dim: usize) -> MemeLibrary {
    let records = (0..n)
        .map(|i| MemeRecord {
            id: format!("m{i:04}"),
            image_path: format!("m{i:04}.png"),
            s_plus: format!("适合场景{i}"),
            s_minus: format!("不适合场景{i}"),
            emotion: format!("情绪{i}"),
            motivation: format!("动机{i}"),
            embeddings: Some(MemeEmbeddings {
                s_plus: quantized(&format!("sp{i}"), dim),
                s_minus: quantized(&format!("sm{i}"), dim),
                emotion: quantized(&format!("em{i}"), dim),
                motivation: quantized(&format!("mo{i}"), dim),
            }),
        })
        .collect();
    MemeLibrary::from_records(records).unwrap()
}

/// Like [`embedded_library`], but vectors also depend on `tag` so that
/// different test cases get different geometry. Skips the persistence
/// quantization step: these fixtures never touch disk, and quantizing
/// hundreds of thousands of vectors dominates runtime.
pub fn embedded_library_tagged(n: usize, dim: usize, tag: usize) -> MemeLibrary {
    let records = (0..n)
        .map(|i| MemeRecord {
            id: format!("m{i:04}"),
            image_path: format!("m{i:04}.png"),
            s_plus: format!("适合场景{i}"),
            s_minus: format!("不适合场景{i}"),
            emotion: format!("情绪{i}"),
            motivation: format!("动机{i}"),
            embeddings: Some(MemeEmbeddings {
                s_plus: mock_embed(&format!("{tag}/sp{i}"), dim),
                s_minus: mock_embed(&format!("{tag}/sm{i}"), dim),
                emotion: mock_embed(&format!("{tag}/em{i}"), dim),
                motivation: mock_embed(&format!("{tag}/mo{i}"), dim),
            }),
        })
        .collect();
    MemeLibrary::from_records(records).unwrap()
}

/// Writes `n` tiny fake image files into `dir`, named `m000.png`...
pub fn write_images(dir: &Path, n: usize) -> Vec<PathBuf> {
    (0..n)
        .map(|i| {
            let path = dir.join(format!("m{i:03}.png"));
            std::fs::write(&path, format!("image-bytes-{i}")).unwrap();
            path
        })
        .collect()
}

/// Builds a small embedded library with matching image files under
/// `root`, runs one mock batch, and returns the dataset directory.
pub fn tiny_mock_dataset(root: &Path, turns: u32, theta0: f64, memes: usize) -> PathBuf {
    use memecmd::pipeline::{
        run_batch, AlignerParams, Backends, PipelineConfig, Sources,
    };
    use memecmd_core::dialogue::{NewsItem, Topic};
    use memecmd_core::mock::{HashChat, HashEmbedding};

    let dim = 32;
    let lib = embedded_library(memes, dim);
    for record in &lib.records {
        std::fs::write(root.join(&record.image_path), format!("img-{}", record.id)).unwrap();
    }
    let library_path = root.join("lib.jsonl");
    memecmd::persist::save_library(&lib, &library_path).unwrap();

    let cfg = PipelineConfig {
        turns,
        sessions: 2,
        seed: 99,
        aligner: AlignerParams {
            theta0,
            ..AlignerParams::default()
        },
        ..PipelineConfig::default()
    };
    let embedding = HashEmbedding::new(dim);
    let out = root.join("dataset");
    run_batch(
        &cfg,
        &lib,
        &library_path,
        &Sources::News(vec![NewsItem {
            topic: Topic::Education,
            title: "夹具标题".into(),
            text: "夹具正文".into(),
        }]),
        &out,
        Backends {
            chat: &HashChat,
            embedding: &embedding,
        },
        "mock",
        2,
    )
    .unwrap();
    out
}

/// Request captured by the test HTTP server.
#[derive(Debug, Clone)]
pub struct CapturedRequest {
    pub path: String,
    pub body: String,
    pub authorization: Option<String>,
}

/// Minimal single-threaded HTTP/1.1 server that plays back a fixed list
/// of `(status, body)` responses, repeating the final one, and records
/// every request it sees.
pub struct TestServer {
    pub base_url: String,
    requests: Arc<Mutex<Vec<CapturedRequest>>>,
}

impl TestServer {
    pub fn start(responses: Vec<(u16, String)>) -> TestServer {
        assert!(!responses.is_empty());
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base_url = format!("http://{}", listener.local_addr().unwrap());
        let requests: Arc<Mutex<Vec<CapturedRequest>>> = Arc::default();
        let seen = Arc::clone(&requests);
        std::thread::spawn(move || {
            let mut served = 0usize;
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let Some(request) = read_request(&mut stream) else {
                    continue;
                };
                seen.lock().unwrap().push(request);
                let (status, body) = &responses[served.min(responses.len() - 1)];
                served += 1;
                let reason = if *status < 400 { "OK" } else { "ERROR" };
                let reply = format!(
                    "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(reply.as_bytes());
            }
        });
        TestServer { base_url, requests }
    }

    pub fn requests(&self) -> Vec<CapturedRequest> {
        self.requests.lock().unwrap().clone()
    }

    pub fn hits(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

fn read_request(stream: &mut std::net::TcpStream) -> Option<CapturedRequest> {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end = loop {
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            return None;
        }
        buf.extend_from_slice(&chunk[..n]);
        if let Some(pos) = find_header_end(&buf) {
            break pos;
        }
    };
    let header_text = String::from_utf8_lossy(&buf[..header_end]).to_string();
    let mut lines = header_text.lines();
    let request_line = lines.next()?;
    let path = request_line.split_whitespace().nth(1)?.to_string();
    let mut content_length = 0usize;
    let mut authorization = None;
    for line in lines {
        let lower = line.to_ascii_lowercase();
        if let Some(v) = lower.strip_prefix("content-length:") {
            content_length = v.trim().parse().ok()?;
        }
        if lower.starts_with("authorization:") {
            authorization = Some(line.split_once(':')?.1.trim().to_string());
        }
    }
    let mut body = buf[header_end + 4..].to_vec();
    while body.len() < content_length {
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            break;
        }
        body.extend_from_slice(&chunk[..n]);
    }
    Some(CapturedRequest {
        path,
        body: String::from_utf8_lossy(&body).to_string(),
        authorization,
    })
}

fn find_header_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n")
}
