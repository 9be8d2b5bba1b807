use std::io::Cursor;
use std::path::PathBuf;

use base64::Engine;
use image::{imageops::FilterType, ImageFormat, RgbaImage};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::annotate::{map_regions, render_regions, AnnotateError, Annotator};
use super::encode::{encode_html, render_list, IndexMap, UiElementList};
use super::overlay::{overlay_som, OverlayError};
use super::tree::{parse_a11y, A11yError, UiTree};
use super::ParserTechnique;
use crate::dataset::{StepRecord, TaskRecord};

/// An image part ready to hand to a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedImage {
    pub mime: String,
    pub width: u32,
    pub height: u32,
    #[serde(serialize_with = "to_b64", deserialize_with = "from_b64")]
    pub data: Vec<u8>,
}

fn to_b64<S: Serializer>(data: &[u8], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(data))
}

fn from_b64<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
    let raw = String::deserialize(d)?;
    base64::engine::general_purpose::STANDARD
        .decode(raw)
        .map_err(serde::de::Error::custom)
}

impl EncodedImage {
    pub fn png(img: &RgbaImage) -> Result<Self, ObservationError> {
        let mut data = Vec::new();
        img.write_to(&mut Cursor::new(&mut data), ImageFormat::Png)
            .map_err(|e| ObservationError::Image(e.to_string()))?;
        Ok(Self {
            mime: "image/png".into(),
            width: img.width(),
            height: img.height(),
            data,
        })
    }

    pub fn base64(&self) -> String {
        base64::engine::general_purpose::STANDARD.encode(&self.data)
    }

    pub fn data_url(&self) -> String {
        format!("data:{};base64,{}", self.mime, self.base64())
    }
}

/// One step's model-facing screen input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenObservation {
    pub technique: ParserTechnique,
    pub text_parts: Vec<String>,
    pub image_parts: Vec<EncodedImage>,
    pub index_map: IndexMap,
    /// Factor applied to a11y coordinates to land on the encoded image.
    pub scale: f64,
}

impl ScreenObservation {
    /// The text slot of the prompt: all text parts joined by blank lines.
    pub fn ui_text(&self) -> String {
        self.text_parts.join("\n\n")
    }
}

/// Downscaling rule applied before any image is encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImagePolicy {
    pub max_long_edge: u32,
}

impl Default for ImagePolicy {
    fn default() -> Self {
        Self { max_long_edge: 1568 }
    }
}

impl ImagePolicy {
    /// Scale factor (≤ 1) for an image of the given size.
    pub fn scale_for(&self, width: u32, height: u32) -> f64 {
        let long = width.max(height);
        if long <= self.max_long_edge || long == 0 {
            1.0
        } else {
            f64::from(self.max_long_edge) / f64::from(long)
        }
    }

    pub fn apply(&self, img: RgbaImage) -> (RgbaImage, f64) {
        let scale = self.scale_for(img.width(), img.height());
        if scale == 1.0 {
            return (img, 1.0);
        }
        let w = ((f64::from(img.width()) * scale).round() as u32).max(1);
        let h = ((f64::from(img.height()) * scale).round() as u32).max(1);
        (image::imageops::resize(&img, w, h, FilterType::Triangle), scale)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ObservationError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    A11y(#[from] A11yError),
    #[error("image: {0}")]
    Image(String),
    #[error(transparent)]
    Overlay(#[from] OverlayError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error("image_annotated needs an annotator")]
    MissingAnnotator,
}

/// Builds the observation for one screen from its screenshot and dump.
pub fn build_observation(
    technique: ParserTechnique,
    png: &[u8],
    xml: &[u8],
    policy: &ImagePolicy,
    annotator: Option<&dyn Annotator>,
) -> Result<ScreenObservation, ObservationError> {
    let tree = parse_a11y(xml)?;
    let mut obs = ScreenObservation {
        technique,
        text_parts: Vec::new(),
        image_parts: Vec::new(),
        index_map: IndexMap::new(),
        scale: 1.0,
    };
    match technique {
        ParserTechnique::A11yHtml => {
            let (html, map) = encode_html(&tree);
            obs.text_parts.push(html);
            obs.index_map = map;
            return Ok(obs);
        }
        ParserTechnique::A11yList => {
            let list = UiElementList::from_tree(&tree);
            obs.text_parts.push(render_list(&list));
            obs.index_map = list.index_map;
            return Ok(obs);
        }
        _ => {}
    }
    let decoded = image::load_from_memory(png)
        .map_err(|e| ObservationError::Image(e.to_string()))?
        .to_rgba8();
    let (img, scale) = policy.apply(decoded);
    obs.scale = scale;
    match technique {
        ParserTechnique::ImageRaw => {
            obs.image_parts.push(EncodedImage::png(&img)?);
        }
        ParserTechnique::ImageAnnotated => {
            let annotator = annotator.ok_or(ObservationError::MissingAnnotator)?;
            let encoded = EncodedImage::png(&img)?;
            let regions = annotator.annotate(&encoded.data, img.width(), img.height())?;
            obs.text_parts.push(render_regions(&regions));
            obs.index_map = map_regions(&regions, &scaled_list(&tree, scale));
            obs.image_parts.push(encoded);
        }
        ParserTechnique::HybridSomA11y => {
            let list = UiElementList::from_tree(&tree);
            let marked = overlay_som(&img, &list, scale)?;
            obs.image_parts.push(EncodedImage::png(&marked)?);
            obs.text_parts.push(render_list(&list));
            obs.index_map = list.index_map;
        }
        ParserTechnique::HybridRawA11y => {
            let list = UiElementList::from_tree(&tree);
            obs.image_parts.push(EncodedImage::png(&img)?);
            obs.text_parts.push(render_list(&list));
            obs.index_map = list.index_map;
        }
        ParserTechnique::A11yHtml | ParserTechnique::A11yList => unreachable!("handled above"),
    }
    Ok(obs)
}

fn scaled_list(tree: &UiTree, scale: f64) -> UiElementList {
    let mut list = UiElementList::from_tree(tree);
    for e in &mut list.elements {
        e.bounds = e.bounds.scaled(scale);
    }
    list
}

/// Reads a step's files and builds its observation.
pub fn build_step_observation(
    technique: ParserTechnique,
    task: &TaskRecord,
    step: &StepRecord,
    policy: &ImagePolicy,
    annotator: Option<&dyn Annotator>,
) -> Result<ScreenObservation, ObservationError> {
    let read = |path: PathBuf| std::fs::read(&path).map_err(|source| ObservationError::Io { path, source });
    let xml = read(task.a11y_path(step))?;
    let png = if technique.has_image() {
        read(task.screenshot_path(step))?
    } else {
        Vec::new()
    };
    build_observation(technique, &png, &xml, policy, annotator)
}

#[cfg(test)]
mod tests {
    use super::*;

    const XML: &[u8] = br#"<hierarchy><node class="android.widget.Button" text="OK" clickable="true" bounds="[10,10][110,60]"/></hierarchy>"#;

    fn png(w: u32, h: u32) -> Vec<u8> {
        EncodedImage::png(&RgbaImage::from_pixel(w, h, image::Rgba([250, 250, 250, 255])))
            .unwrap()
            .data
    }

    #[test]
    fn modality_rules() {
        let img = png(200, 100);
        let policy = ImagePolicy::default();
        for t in ParserTechnique::ALL {
            if t == ParserTechnique::ImageAnnotated {
                continue;
            }
            let obs = build_observation(t, &img, XML, &policy, None).unwrap();
            assert_eq!(!obs.text_parts.is_empty(), t.has_text(), "{t}");
            assert_eq!(!obs.image_parts.is_empty(), t.has_image(), "{t}");
            assert_eq!(obs.index_map.len(), usize::from(t.exposes_indexes()), "{t}");
        }
        assert!(matches!(
            build_observation(ParserTechnique::ImageAnnotated, &img, XML, &policy, None),
            Err(ObservationError::MissingAnnotator)
        ));
    }

    #[test]
    fn long_screens_are_downscaled() {
        let policy = ImagePolicy { max_long_edge: 100 };
        let obs = build_observation(ParserTechnique::HybridSomA11y, &png(200, 400), XML, &policy, None).unwrap();
        assert_eq!(obs.scale, 0.25);
        assert_eq!((obs.image_parts[0].width, obs.image_parts[0].height), (50, 100));
        assert_eq!(ImagePolicy::default().scale_for(720, 1280), 1.0);
    }

    #[test]
    fn encoded_image_serializes_as_base64() {
        let img = EncodedImage {
            mime: "image/png".into(),
            width: 1,
            height: 1,
            data: vec![1, 2, 3],
        };
        let v = serde_json::to_value(&img).unwrap();
        assert_eq!(v["data"], "AQID");
        assert_eq!(serde_json::from_value::<EncodedImage>(v).unwrap(), img);
    }
}
