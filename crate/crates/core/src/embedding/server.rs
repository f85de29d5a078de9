//! A local server speaking the embedding wire contract, backed by the stub
//! embedder. Used as the offline stand-in for the model sidecar.

use std::sync::Arc;
use std::thread::JoinHandle;

use tiny_http::{Header, Method, Response, Server};

use super::service::{EmbedRequest, EmbedResponse, Health};
use super::stub_embed;
use crate::error::{Error, Result};

pub struct FixtureEmbedServer {
    server: Arc<Server>,
    url: String,
    worker: Option<JoinHandle<()>>,
}

impl FixtureEmbedServer {
    /// Binds `addr` (use port 0 for an ephemeral port) and starts serving.
    pub fn start(addr: &str, dim: usize) -> Result<Self> {
        let server = Server::http(addr)
            .map_err(|e| Error::Config(format!("cannot bind embed server on {addr}: {e}")))?;
        let server = Arc::new(server);
        let local = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| Error::Config("embed server has no IP address".into()))?;
        let url = format!("http://{local}");
        let worker = {
            let server = Arc::clone(&server);
            std::thread::spawn(move || {
                for mut request in server.incoming_requests() {
                    let (status, body) = handle(&mut request, dim);
                    let _ = request.respond(json_response(status, body));
                }
            })
        };
        Ok(FixtureEmbedServer {
            server,
            url,
            worker: Some(worker),
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Blocks until the server is shut down from another thread.
    pub fn join(mut self) {
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for FixtureEmbedServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn json_response(status: u16, body: String) -> Response<std::io::Cursor<Vec<u8>>> {
    let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
    Response::from_string(body)
        .with_status_code(status)
        .with_header(header)
}

fn handle(request: &mut tiny_http::Request, dim: usize) -> (u16, String) {
    let route = (request.method().clone(), request.url().to_string());
    match (&route.0, route.1.as_str()) {
        (Method::Get, "/health") => {
            let health = Health {
                status: "ok".into(),
                model: format!("stub-hash-{dim}"),
            };
            (200, serde_json::to_string(&health).expect("serializable"))
        }
        (Method::Post, "/embed") => {
            let mut body = String::new();
            if request.as_reader().read_to_string(&mut body).is_err() {
                return (400, r#"{"error":"unreadable body"}"#.into());
            }
            match serde_json::from_str::<EmbedRequest>(&body) {
                Ok(req) => {
                    let vectors = req.texts.iter().map(|t| stub_embed(t, dim)).collect();
                    let resp = EmbedResponse { dim, vectors };
                    (200, serde_json::to_string(&resp).expect("serializable"))
                }
                Err(e) => (
                    400,
                    serde_json::json!({ "error": e.to_string() }).to_string(),
                ),
            }
        }
        _ => (404, r#"{"error":"not found"}"#.into()),
    }
}
