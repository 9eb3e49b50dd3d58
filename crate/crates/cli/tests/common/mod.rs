#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use axum::body::Body;
use axum::http::Request;
use axum::Router;
use http_body_util::BodyExt;
use tower::ServiceExt;

use depnet_service::{router, AppState, Config, REVISION_HEADER};

pub fn depnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_depnet"))
        .args(args)
        .output()
        .expect("spawn depnet")
}

/// Runs the binary and returns stdout, panicking with stderr on failure.
pub fn depnet_ok(args: &[&str]) -> String {
    let out = depnet(args);
    assert!(
        out.status.success(),
        "depnet {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 output")
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

pub struct Reply {
    pub status: u16,
    pub revision: Option<u64>,
    pub text: String,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_str(&self.text).unwrap_or_else(|e| panic!("{e}: {}", self.text))
    }
}

/// In-process service driven synchronously.
pub struct Service {
    rt: tokio::runtime::Runtime,
    app: Router,
}

impl Service {
    pub fn new() -> Self {
        Self {
            rt: tokio::runtime::Runtime::new().expect("runtime"),
            app: router(AppState::new(Config::default())),
        }
    }

    pub fn call(&self, method: &str, uri: &str, body: impl Into<String>) -> Reply {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .body(Body::from(body.into()))
            .expect("request");
        self.rt.block_on(async {
            let resp = self.app.clone().oneshot(req).await.expect("infallible");
            let status = resp.status().as_u16();
            let revision = resp
                .headers()
                .get(REVISION_HEADER)
                .map(|v| v.to_str().unwrap().parse().unwrap());
            let bytes = resp.into_body().collect().await.expect("body").to_bytes();
            Reply {
                status,
                revision,
                text: String::from_utf8(bytes.to_vec()).expect("utf-8 body"),
            }
        })
    }

    /// Like `call`, requiring a 2xx status.
    pub fn ok(&self, method: &str, uri: &str, body: impl Into<String>) -> Reply {
        let r = self.call(method, uri, body);
        assert!((200..300).contains(&r.status), "{method} {uri}: {} {}", r.status, r.text);
        r
    }
}
