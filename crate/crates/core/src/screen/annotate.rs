use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use base64::Engine;
use image::RgbaImage;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::encode::{IndexMap, UiElementList};
use super::tree::Rect;

pub const ANNOTATION_KINDS: [&str; 3] = ["ocr", "captioning", "detection"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionSource {
    Ocr,
    Captioning,
    Detection,
}

impl RegionSource {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionSource::Ocr => "ocr",
            RegionSource::Captioning => "captioning",
            RegionSource::Detection => "detection",
        }
    }
}

/// One pseudo-structural region reported by an external annotator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorRegion {
    #[serde(with = "bbox_array")]
    pub bbox: Rect,
    pub label: String,
    pub source: RegionSource,
    pub confidence: f64,
}

mod bbox_array {
    use super::Rect;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(r: &Rect, s: S) -> Result<S::Ok, S::Error> {
        [r.left, r.top, r.right, r.bottom].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rect, D::Error> {
        let [l, t, r, b] = <[i32; 4]>::deserialize(d)?;
        Ok(Rect::new(l, t, r, b))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnnotateError {
    #[error("annotator unreachable: {0}")]
    Unreachable(String),
    #[error("annotator timed out")]
    Timeout,
    #[error("annotator returned HTTP {0}")]
    Status(u16),
    #[error("malformed annotator response: {0}")]
    Malformed(String),
}

/// Anything that can turn a screenshot into regions.
pub trait Annotator: Send + Sync {
    fn annotate(&self, png: &[u8], width: u32, height: u32) -> Result<Vec<AnnotatorRegion>, AnnotateError>;
}

/// Checks a `{"regions": [...]}` body against the region invariants.
pub(crate) fn decode_regions(body: &Value, width: u32, height: u32) -> Result<Vec<AnnotatorRegion>, AnnotateError> {
    let raw = body
        .get("regions")
        .ok_or_else(|| AnnotateError::Malformed("missing \"regions\"".into()))?;
    let regions: Vec<AnnotatorRegion> =
        serde_json::from_value(raw.clone()).map_err(|e| AnnotateError::Malformed(e.to_string()))?;
    for (i, r) in regions.iter().enumerate() {
        if !(0.0..=1.0).contains(&r.confidence) {
            return Err(AnnotateError::Malformed(format!(
                "region {i} confidence {} outside [0,1]",
                r.confidence
            )));
        }
        let b = r.bbox;
        if b.left < 0 || b.top < 0 || b.right > width as i32 || b.bottom > height as i32 || b.width() < 0 || b.height() < 0
        {
            return Err(AnnotateError::Malformed(format!(
                "region {i} bbox {b} outside the {width}x{height} image"
            )));
        }
    }
    Ok(regions)
}

/// Client for the `POST /annotate` protocol.
#[derive(Clone)]
pub struct HttpAnnotator {
    url: String,
    agent: ureq::Agent,
}

impl HttpAnnotator {
    /// `base_url` is the service root, e.g. `http://127.0.0.1:8090`.
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            url: format!("{}/annotate", base_url.trim_end_matches('/')),
            agent,
        }
    }
}

impl Annotator for HttpAnnotator {
    fn annotate(&self, png: &[u8], width: u32, height: u32) -> Result<Vec<AnnotatorRegion>, AnnotateError> {
        let body = json!({
            "image_b64": base64::engine::general_purpose::STANDARD.encode(png),
            "kinds": ANNOTATION_KINDS,
        });
        let mut resp = self.agent.post(&self.url).send_json(&body).map_err(map_ureq_error)?;
        let value: Value = resp.body_mut().read_json().map_err(|e| match map_ureq_error(e) {
            AnnotateError::Unreachable(detail) => AnnotateError::Malformed(detail),
            other => other,
        })?;
        decode_regions(&value, width, height)
    }
}

fn map_ureq_error(e: ureq::Error) -> AnnotateError {
    match e {
        ureq::Error::StatusCode(code) => AnnotateError::Status(code),
        ureq::Error::Timeout(_) => AnnotateError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => AnnotateError::Timeout,
        ureq::Error::Json(e) => AnnotateError::Malformed(e.to_string()),
        other => AnnotateError::Unreachable(other.to_string()),
    }
}

/// In-process annotator: fixed regions, or the deterministic block detector
/// when none are given.
#[derive(Debug, Clone, Default)]
pub struct StaticAnnotator {
    regions: Option<Vec<AnnotatorRegion>>,
}

impl StaticAnnotator {
    pub fn fixed(regions: Vec<AnnotatorRegion>) -> Self {
        Self { regions: Some(regions) }
    }

    pub fn blocks() -> Self {
        Self::default()
    }
}

impl Annotator for StaticAnnotator {
    fn annotate(&self, png: &[u8], width: u32, height: u32) -> Result<Vec<AnnotatorRegion>, AnnotateError> {
        let regions = match &self.regions {
            Some(r) => r.clone(),
            None => {
                let img = image::load_from_memory(png)
                    .map_err(|e| AnnotateError::Malformed(e.to_string()))?
                    .to_rgba8();
                detect_blocks(&img)
            }
        };
        decode_regions(&json!({ "regions": regions }), width, height)
    }
}

const CELL: u32 = 4;

/// Deterministic stand-in for a detector: connected same-colour blocks on a
/// 4-px grid, excluding the dominant (background) colour and blocks smaller
/// than 16 px on either side.
pub(crate) fn detect_blocks(img: &RgbaImage) -> Vec<AnnotatorRegion> {
    let (w, h) = img.dimensions();
    let (gw, gh) = (w / CELL, h / CELL);
    if gw == 0 || gh == 0 {
        return Vec::new();
    }
    let sample = |gx: u32, gy: u32| img.get_pixel(gx * CELL + CELL / 2, gy * CELL + CELL / 2).0;
    let mut freq: HashMap<[u8; 4], usize> = HashMap::new();
    for gy in 0..gh {
        for gx in 0..gw {
            *freq.entry(sample(gx, gy)).or_default() += 1;
        }
    }
    let background = freq
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(c, _)| c);
    let mut seen = vec![false; (gw * gh) as usize];
    let mut regions = Vec::new();
    for gy in 0..gh {
        for gx in 0..gw {
            let color = sample(gx, gy);
            if seen[(gy * gw + gx) as usize] || Some(color) == background {
                continue;
            }
            let (mut x0, mut y0, mut x1, mut y1) = (gx, gy, gx, gy);
            let mut stack = vec![(gx, gy)];
            seen[(gy * gw + gx) as usize] = true;
            while let Some((x, y)) = stack.pop() {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
                let neighbours = [
                    (x.wrapping_sub(1), y),
                    (x + 1, y),
                    (x, y.wrapping_sub(1)),
                    (x, y + 1),
                ];
                for (nx, ny) in neighbours {
                    if nx < gw && ny < gh && !seen[(ny * gw + nx) as usize] && sample(nx, ny) == color {
                        seen[(ny * gw + nx) as usize] = true;
                        stack.push((nx, ny));
                    }
                }
            }
            if x1 - x0 + 1 < 4 || y1 - y0 + 1 < 4 {
                continue;
            }
            let [r, g, b, _] = color;
            regions.push(AnnotatorRegion {
                bbox: Rect::new(
                    (x0 * CELL) as i32,
                    (y0 * CELL) as i32,
                    ((x1 + 1) * CELL).min(w) as i32,
                    ((y1 + 1) * CELL).min(h) as i32,
                ),
                label: format!("block #{r:02x}{g:02x}{b:02x}"),
                source: RegionSource::Detection,
                confidence: 0.9,
            });
        }
    }
    regions.sort_by_key(|r| (r.bbox.top, r.bbox.left));
    regions
}

/// `N. "<label>" @ [l,t,r,b] (source)`, one region per line.
pub fn render_regions(regions: &[AnnotatorRegion]) -> String {
    regions
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let label = r.label.replace('\\', "\\\\").replace('"', "\\\"").replace(['\n', '\r'], " ");
            format!("{i}. \"{label}\" @ {} ({})", r.bbox, r.source.as_str())
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Links region numbers to listed elements: greedy by IoU (highest first),
/// each side used at most once, pairs below 0.5 IoU left unmapped.
pub fn map_regions(regions: &[AnnotatorRegion], elements: &UiElementList) -> IndexMap {
    let mut pairs = Vec::new();
    for (ri, r) in regions.iter().enumerate() {
        for (ei, e) in elements.elements.iter().enumerate() {
            let iou = r.bbox.intersection_over_union(&e.bounds);
            if iou >= 0.5 {
                pairs.push((iou, ri, ei));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut map = IndexMap::new();
    let mut used_elements = vec![false; elements.len()];
    for (_, ri, ei) in pairs {
        if !used_elements[ei] && map.insert(ri, elements.elements[ei].canonical_id.clone()) {
            used_elements[ei] = true;
        }
    }
    map
}

/// Body of one `POST /annotate` request as seen by the mock.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotateRequest {
    pub image_b64: String,
    pub kinds: Vec<String>,
}

/// What the mock sends back.
#[derive(Debug, Clone)]
pub enum MockReply {
    Regions(Vec<AnnotatorRegion>),
    Json(Value),
    Raw(String),
    Status(u16),
    Delay(Duration, Box<MockReply>),
}

type Responder = dyn Fn(&AnnotateRequest) -> MockReply + Send + Sync;

/// Loopback annotator service. The default responder decodes the image and
/// runs the block detector; tests supply their own.
pub struct MockAnnotatorService {
    server: Arc<tiny_http::Server>,
    addr: SocketAddr,
    worker: Option<JoinHandle<()>>,
}

impl MockAnnotatorService {
    pub fn start() -> std::io::Result<Self> {
        Self::with_responder(|req: &AnnotateRequest| {
            let decoded = base64::engine::general_purpose::STANDARD
                .decode(&req.image_b64)
                .ok()
                .and_then(|bytes| image::load_from_memory(&bytes).ok());
            match decoded {
                Some(img) => MockReply::Regions(detect_blocks(&img.to_rgba8())),
                None => MockReply::Status(400),
            }
        })
    }

    pub fn with_responder<F>(responder: F) -> std::io::Result<Self>
    where
        F: Fn(&AnnotateRequest) -> MockReply + Send + Sync + 'static,
    {
        let server = tiny_http::Server::http("127.0.0.1:0").map_err(std::io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("not an IP listener"))?;
        let server = Arc::new(server);
        let responder: Arc<Responder> = Arc::new(responder);
        let srv = Arc::clone(&server);
        let worker = std::thread::spawn(move || {
            for request in srv.incoming_requests() {
                let responder = Arc::clone(&responder);
                std::thread::spawn(move || handle(request, &*responder));
            }
        });
        Ok(Self {
            server,
            addr,
            worker: Some(worker),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for MockAnnotatorService {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

fn handle(mut request: tiny_http::Request, responder: &Responder) {
    let json_header = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header");
    if request.method() != &tiny_http::Method::Post || request.url() != "/annotate" {
        let _ = request.respond(tiny_http::Response::from_string("not found").with_status_code(404));
        return;
    }
    let mut body = String::new();
    let parsed = request
        .as_reader()
        .read_to_string(&mut body)
        .ok()
        .and_then(|_| serde_json::from_str::<AnnotateRequest>(&body).ok());
    let Some(parsed) = parsed else {
        let _ = request.respond(tiny_http::Response::from_string("bad request").with_status_code(400));
        return;
    };
    let mut reply = responder(&parsed);
    while let MockReply::Delay(d, inner) = reply {
        std::thread::sleep(d);
        reply = *inner;
    }
    let response = match reply {
        MockReply::Regions(regions) => {
            tiny_http::Response::from_string(json!({ "regions": regions }).to_string()).with_header(json_header)
        }
        MockReply::Json(v) => tiny_http::Response::from_string(v.to_string()).with_header(json_header),
        MockReply::Raw(s) => tiny_http::Response::from_string(s),
        MockReply::Status(code) => tiny_http::Response::from_string("error").with_status_code(code),
        MockReply::Delay(..) => unreachable!("delays unwrapped above"),
    };
    let _ = request.respond(response);
}
