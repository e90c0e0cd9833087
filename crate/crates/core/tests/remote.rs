//! Logits protocol client against an in-process HTTP stub.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use specmer::lm::{
    sequence_nll, InfoResponse, LanguageModel, LmError, LogitsRequest, LogitsResponse, NgramModel, RemoteModel,
};
use specmer::vocab::{TokenId, Vocabulary};

type Logits = dyn Fn(&[TokenId]) -> Vec<f64> + Send + Sync;

struct Stub {
    url: String,
    posts: Arc<AtomicUsize>,
}

fn read_request(stream: &mut TcpStream) -> Option<(String, String, Vec<u8>)> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let mut parts = line.split_whitespace();
    let method = parts.next()?.to_string();
    let path = parts.next()?.to_string();
    let mut len = 0usize;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    Some((method, path, body))
}

fn respond(stream: &mut TcpStream, status: &str, body: &str) {
    let _ = write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
}

/// Serves `/v1/info` with `vocab` and `/v1/logits` with `logits(context)` per row.
/// With `status` set, every logits call answers with that status instead.
fn serve(vocab: Vec<String>, logits: Arc<Logits>, status: Option<&'static str>) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let posts = Arc::new(AtomicUsize::new(0));
    let counter = posts.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let Some((method, path, body)) = read_request(&mut stream) else { continue };
            match (method.as_str(), path.as_str()) {
                ("GET", "/v1/info") => {
                    let info = InfoResponse { vocab: vocab.clone(), model: "stub".into() };
                    respond(&mut stream, "200 OK", &serde_json::to_string(&info).unwrap());
                }
                ("POST", "/v1/logits") => {
                    counter.fetch_add(1, Ordering::SeqCst);
                    if let Some(s) = status {
                        respond(&mut stream, s, "{}");
                        continue;
                    }
                    let req: LogitsRequest = serde_json::from_slice(&body).unwrap();
                    let reply = LogitsResponse { logits: req.contexts.iter().map(|c| logits(c)).collect() };
                    respond(&mut stream, "200 OK", &serde_json::to_string(&reply).unwrap());
                }
                _ => respond(&mut stream, "404 Not Found", "{}"),
            }
        }
    });
    Stub { url, posts }
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn echo_logits(context: &[TokenId]) -> Vec<f64> {
    let n = context.len() as f64;
    (0..4).map(|j| (j as f64 + 1.0) * 0.5 - n * (j as f64 % 2.0)).collect()
}

#[test]
fn batch_rows_follow_input_order_in_one_round_trip() {
    let v = Vocabulary::residues_only("ACDE").unwrap();
    let stub = serve(v.symbols().to_vec(), Arc::new(echo_logits), None);
    let m = RemoteModel::connect(&stub.url, "stub", &v).unwrap();
    let contexts = vec![vec![], vec![0], vec![0, 1, 2], vec![3, 3]];
    let ds = m.batch_next_distributions(&contexts).unwrap();
    assert_eq!(stub.posts.load(Ordering::SeqCst), 1);
    for (c, d) in contexts.iter().zip(&ds) {
        for (a, b) in d.probs().iter().zip(softmax(&echo_logits(c))) {
            assert!((a - b).abs() < 1e-15);
        }
    }
    assert!(m.batch_next_distributions(&[]).unwrap().is_empty());
    assert_eq!(stub.posts.load(Ordering::SeqCst), 1);
}

#[test]
fn vocabulary_mismatch_is_refused() {
    let v = Vocabulary::residues_only("ACDE").unwrap();
    let stub = serve(vec!["A".into(), "C".into(), "E".into(), "D".into()], Arc::new(echo_logits), None);
    assert!(matches!(RemoteModel::connect(&stub.url, "stub", &v), Err(LmError::VocabMismatch(_))));
}

#[test]
fn nll_matches_the_local_model() {
    let v = Vocabulary::protein();
    let corpus: Vec<_> = ["MKVLAAGIWWQ", "MKTLLAGVWWE", "MRVLSAGLWFQ"].iter().map(|s| v.encode(s).unwrap()).collect();
    let local = Arc::new(NgramModel::train(&corpus, 3, 0.5, &v, true).unwrap());
    let served = local.clone();
    let logits = move |c: &[TokenId]| -> Vec<f64> {
        let d = served.next_distribution(c).unwrap();
        d.probs().iter().map(|p| if *p > 0.0 { p.ln() } else { -1e300 }).collect()
    };
    let stub = serve(v.symbols().to_vec(), Arc::new(logits), None);
    let remote = RemoteModel::connect(&stub.url, "stub", &v).unwrap();
    let seq = v.encode("MKVLSAGVWWQ").unwrap();
    let a = sequence_nll(local.as_ref(), &seq.as_slice()[2..], &seq.as_slice()[..2]).unwrap();
    let b = sequence_nll(&remote, &seq.as_slice()[2..], &seq.as_slice()[..2]).unwrap();
    assert!((a - b).abs() < 1e-6, "{a} vs {b}");
}

#[test]
fn server_errors_map_to_remote_errors() {
    let v = Vocabulary::residues_only("ACDE").unwrap();
    let busy = serve(v.symbols().to_vec(), Arc::new(echo_logits), Some("503 Service Unavailable"));
    let m = RemoteModel::connect(&busy.url, "stub", &v).unwrap();
    assert!(matches!(m.next_distribution(&[0]), Err(LmError::RemoteUnavailable(_))));
    let bad = serve(v.symbols().to_vec(), Arc::new(echo_logits), Some("422 Unprocessable Entity"));
    let m = RemoteModel::connect(&bad.url, "stub", &v).unwrap();
    let e = m.next_distribution(&[0]).unwrap_err();
    assert!(matches!(e, LmError::RemoteProtocol(_)) && e.is_remote());
    let short = serve(v.symbols().to_vec(), Arc::new(|_: &[TokenId]| vec![0.0; 3]), None);
    let m = RemoteModel::connect(&short.url, "stub", &v).unwrap();
    assert!(matches!(m.next_distribution(&[0]), Err(LmError::RemoteProtocol(_))));
}

#[test]
fn unreachable_server_is_unavailable() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let v = Vocabulary::residues_only("ACDE").unwrap();
    let e = RemoteModel::connect(&format!("http://127.0.0.1:{port}"), "stub", &v).unwrap_err();
    assert!(matches!(e, LmError::RemoteUnavailable(_)));
}
