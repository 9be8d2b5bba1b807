//! Accessibility-tree parsing and the screen representations handed to a
//! model: HTML-style text, element lists, raw and annotated screenshots, and
//! set-of-marks overlays.

mod annotate;
mod encode;
mod observation;
mod overlay;
mod tree;

use serde::{Deserialize, Serialize};

pub use annotate::{
    map_regions, render_regions, AnnotateError, AnnotateRequest, Annotator, AnnotatorRegion, HttpAnnotator,
    MockAnnotatorService, MockReply, RegionSource, StaticAnnotator, ANNOTATION_KINDS,
};
pub use encode::{encode_html, encode_list, render_list, IndexMap, ListedElement, UiElementList};
pub use observation::{
    build_observation, build_step_observation, EncodedImage, ImagePolicy, ObservationError, ScreenObservation,
};
pub use overlay::{overlay_som, OverlayError, SOM_PALETTE};
pub use tree::{parse_a11y, A11yError, Rect, UiNode, UiTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParserTechnique {
    A11yHtml,
    A11yList,
    ImageRaw,
    ImageAnnotated,
    HybridSomA11y,
    HybridRawA11y,
}

impl ParserTechnique {
    pub const ALL: [ParserTechnique; 6] = [
        ParserTechnique::A11yHtml,
        ParserTechnique::A11yList,
        ParserTechnique::ImageRaw,
        ParserTechnique::ImageAnnotated,
        ParserTechnique::HybridSomA11y,
        ParserTechnique::HybridRawA11y,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParserTechnique::A11yHtml => "a11y_html",
            ParserTechnique::A11yList => "a11y_list",
            ParserTechnique::ImageRaw => "image_raw",
            ParserTechnique::ImageAnnotated => "image_annotated",
            ParserTechnique::HybridSomA11y => "hybrid_som_a11y",
            ParserTechnique::HybridRawA11y => "hybrid_raw_a11y",
        }
    }

    pub fn parse(raw: &str) -> Option<Self> {
        let norm = raw.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL.into_iter().find(|t| t.as_str() == norm)
    }

    pub fn has_text(self) -> bool {
        !matches!(self, ParserTechnique::ImageRaw)
    }

    pub fn has_image(self) -> bool {
        !matches!(self, ParserTechnique::A11yHtml | ParserTechnique::A11yList)
    }

    /// Whether the model can refer to elements by a presentation index.
    pub fn exposes_indexes(self) -> bool {
        !matches!(self, ParserTechnique::ImageRaw)
    }
}

impl std::fmt::Display for ParserTechnique {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
