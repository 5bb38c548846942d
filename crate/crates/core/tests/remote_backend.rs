use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use diffx_core::backend::{
    GenerateRequest, GenerationBackend, MockBackend, MockConfig, Mode, RemoteBackend,
};
use diffx_core::scheduler::plan_for_strength;
use diffx_core::{Error, Strength, Tier};

/// Reads one HTTP/1.1 request and returns its body.
fn read_request(stream: &mut TcpStream) -> Vec<u8> {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut len = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().unwrap();
            }
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    body
}

fn respond(stream: &mut TcpStream, status: &str, body: &[u8]) {
    write!(
        stream,
        "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n",
        body.len()
    )
    .unwrap();
    stream.write_all(body).unwrap();
    stream.flush().unwrap();
}

/// Serves `n` requests with `handler`, returning the base URL.
fn serve(n: usize, handler: fn(GenerateRequest) -> (String, Vec<u8>, Duration)) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming().take(n) {
            let mut stream = stream.unwrap();
            let body = read_request(&mut stream);
            let req: GenerateRequest = serde_json::from_slice(&body).unwrap();
            let (status, out, delay) = handler(req);
            thread::sleep(delay);
            let _ = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                respond(&mut stream, &status, &out)
            }));
        }
    });
    format!("http://{addr}")
}

/// Echo server: renders a small mock image of the requested prompt.
fn echo(req: GenerateRequest) -> (String, Vec<u8>, Duration) {
    let mock = MockBackend::new(MockConfig {
        width: 8,
        height: 6,
        payload_bytes: 0,
        ..MockConfig::new(Tier::Edge)
    });
    let img = mock.txt2img(&req.prompt, req.steps, req.seed).unwrap();
    let body = serde_json::json!({
        "image_b64": B64.encode(img.encoded()),
        "width": 8,
        "height": 6,
    });
    (
        "200 OK".into(),
        serde_json::to_vec(&body).unwrap(),
        Duration::ZERO,
    )
}

#[test]
fn txt2img_round_trip_through_stub_server() {
    let url = serve(1, echo);
    let backend = RemoteBackend::new(&url, Duration::from_secs(10));
    let img = backend.txt2img("a lighthouse", 4, 9).unwrap();
    assert_eq!((img.width(), img.height()), (8, 6));
    assert_eq!(img.pixels().len(), 8 * 6 * 3);
    assert!(img.payload_bytes() > img.encoded().len());
}

#[test]
fn img2img_sends_plan_and_init_image() {
    fn check(req: GenerateRequest) -> (String, Vec<u8>, Duration) {
        assert_eq!(req.mode, Mode::Img2img);
        assert_eq!(req.strength, Some(0.6));
        assert_eq!(req.steps, 15);
        assert_eq!(req.timesteps.as_ref().unwrap().len(), 15);
        assert!(req.init_image_b64.is_some());
        echo(req)
    }
    let url = serve(2, check);
    let backend = RemoteBackend::new(&url, Duration::from_secs(10));
    let init = MockBackend::new(MockConfig {
        width: 8,
        height: 6,
        payload_bytes: 0,
        ..MockConfig::new(Tier::Edge)
    })
    .txt2img("a dog", 25, 1)
    .unwrap();
    let plan = plan_for_strength(Strength::new(0.6).unwrap(), 25, 999).unwrap();
    let out = backend.img2img(&init, "a dog at night", &plan, 2).unwrap();
    assert_eq!(out.strength_used(), Some(Strength::new(0.6).unwrap()));
}

#[test]
fn malformed_json_is_a_protocol_error() {
    let url = serve(1, |_| {
        ("200 OK".into(), b"{not json".to_vec(), Duration::ZERO)
    });
    let backend = RemoteBackend::new(&url, Duration::from_secs(10));
    assert!(matches!(
        backend.txt2img("x", 1, 0),
        Err(Error::ProtocolError(_))
    ));
}

#[test]
fn bad_base64_and_wrong_dimensions_are_protocol_errors() {
    let url = serve(1, |_| {
        let body = br#"{"image_b64":"@@@","width":1,"height":1}"#.to_vec();
        ("200 OK".into(), body, Duration::ZERO)
    });
    let backend = RemoteBackend::new(&url, Duration::from_secs(10));
    assert!(matches!(
        backend.txt2img("x", 1, 0),
        Err(Error::ProtocolError(_))
    ));

    let url = serve(1, |req| {
        let (status, body, d) = echo(req);
        let mut v: serde_json::Value = serde_json::from_slice(&body).unwrap();
        v["width"] = 99.into();
        (status, serde_json::to_vec(&v).unwrap(), d)
    });
    let backend = RemoteBackend::new(&url, Duration::from_secs(10));
    assert!(matches!(
        backend.txt2img("x", 1, 0),
        Err(Error::ProtocolError(_))
    ));
}

#[test]
fn server_errors_map_to_unavailable() {
    let url = serve(1, |_| {
        (
            "503 Service Unavailable".into(),
            b"{}".to_vec(),
            Duration::ZERO,
        )
    });
    let backend = RemoteBackend::new(&url, Duration::from_secs(10));
    let err = backend.txt2img("x", 1, 0).unwrap_err();
    assert!(matches!(err, Error::BackendUnavailable(_)));
    assert!(err.is_backend());

    let url = serve(1, |_| {
        ("404 Not Found".into(), b"{}".to_vec(), Duration::ZERO)
    });
    let backend = RemoteBackend::new(&url, Duration::from_secs(10));
    assert!(matches!(
        backend.txt2img("x", 1, 0),
        Err(Error::ProtocolError(_))
    ));
}

#[test]
fn slow_server_times_out() {
    let url = serve(1, |req| {
        let (s, b, _) = echo(req);
        (s, b, Duration::from_millis(1500))
    });
    let backend = RemoteBackend::new(&url, Duration::from_millis(300));
    assert!(matches!(backend.txt2img("x", 1, 0), Err(Error::Timeout)));
}

#[test]
fn refused_connection_is_unavailable() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let backend = RemoteBackend::new(&format!("http://127.0.0.1:{port}"), Duration::from_secs(2));
    assert!(matches!(
        backend.txt2img("x", 1, 0),
        Err(Error::BackendUnavailable(_))
    ));
}
