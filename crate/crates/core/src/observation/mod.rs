//! Modality-conditioned table observations: text serializers, the image
//! renderer, and the composer that picks between them.

mod render;
mod serialize;
mod truncate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::table::{Table, TableEnv};

pub use render::{layout, render_image, ImageFormat, RenderConfig, RenderedImage, MAX_DIMENSION_PX};
pub use serialize::{parse_json_records, parse_markdown, serialize_json, serialize_latex, serialize_markdown};
pub use truncate::{truncate, ELLIPSIS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservationError {
    #[error("malformed table: {0}")]
    MalformedTable(String),
    #[error("rendered table would be {width}x{height} px, over the {max} px limit", max = MAX_DIMENSION_PX)]
    TableTooLargeForPixelBudget { width: u32, height: u32 },
    #[error("invalid render config: {0}")]
    InvalidConfig(String),
    #[error("image encoding failed: {0}")]
    Encode(String),
    #[error("unknown modality `{0}`")]
    UnknownModality(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextFormat {
    #[default]
    Markdown,
    Json,
    Latex,
}

impl TextFormat {
    pub fn serialize(self, table: &Table) -> String {
        match self {
            TextFormat::Markdown => serialize_markdown(table),
            TextFormat::Json => serialize_json(table),
            TextFormat::Latex => serialize_latex(table),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TextFormat::Markdown => "markdown",
            TextFormat::Json => "json",
            TextFormat::Latex => "latex",
        }
    }
}

impl FromStr for TextFormat {
    type Err = ObservationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(TextFormat::Markdown),
            "json" => Ok(TextFormat::Json),
            "latex" | "tex" => Ok(TextFormat::Latex),
            other => Err(ObservationError::UnknownModality(other.to_string())),
        }
    }
}

/// How the table is shown to the model at a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Modality {
    Text(TextFormat),
    #[default]
    Image,
    Multimodal,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Modality::Text(TextFormat::Markdown) => f.write_str("text"),
            Modality::Text(fmt_) => write!(f, "text:{}", fmt_.as_str()),
            Modality::Image => f.write_str("image"),
            Modality::Multimodal => f.write_str("multimodal"),
        }
    }
}

impl FromStr for Modality {
    type Err = ObservationError;

    /// Accepts `text`, `text:<format>`, a bare format name, `image`/`img`,
    /// and `multimodal`/`multi`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        if let Some(fmt_) = lower.strip_prefix("text:") {
            return Ok(Modality::Text(fmt_.parse()?));
        }
        match lower.as_str() {
            "text" | "txt" => Ok(Modality::Text(TextFormat::Markdown)),
            "image" | "img" => Ok(Modality::Image),
            "multimodal" | "multi" => Ok(Modality::Multimodal),
            other => other
                .parse::<TextFormat>()
                .map(Modality::Text)
                .map_err(|_| ObservationError::UnknownModality(s.to_string())),
        }
    }
}

impl Serialize for Modality {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Modality {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Encoded observation handed to the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub text: Option<String>,
    pub image: Option<Vec<u8>>,
    pub modality: Modality,
    pub truncated: bool,
}

pub fn compose_observation(
    env: &TableEnv,
    modality: Modality,
    cfg: &RenderConfig,
) -> Result<Observation, ObservationError> {
    match modality {
        Modality::Text(format) => {
            let (table, truncated) = truncate(&env.current, cfg.max_rows, cfg.max_cols);
            Ok(Observation { text: Some(format.serialize(&table)), image: None, modality, truncated })
        }
        Modality::Image => {
            let img = render_image(&env.current, cfg)?;
            Ok(Observation { text: None, image: Some(img.bytes), modality, truncated: img.truncated })
        }
        Modality::Multimodal => {
            let img = render_image(&env.current, cfg)?;
            let text = format!("Columns: {}", env.current.headers().join(", "));
            Ok(Observation { text: Some(text), image: Some(img.bytes), modality, truncated: img.truncated })
        }
    }
}
