//! Stimulus settings: camera zoom, image clutter and the target class a
//! curve is measured for.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    High,
    Medium,
    Low,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::High, Level::Medium, Level::Low];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::High => "high",
            Level::Medium => "medium",
            Level::Low => "low",
        }
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "high" => Ok(Level::High),
            "medium" => Ok(Level::Medium),
            "low" => Ok(Level::Low),
            other => Err(Error::Parse(format!("unknown level {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Person,
    Weapon,
}

impl Target {
    pub const ALL: [Target; 2] = [Target::Person, Target::Weapon];

    pub fn as_str(self) -> &'static str {
        match self {
            Target::Person => "person",
            Target::Weapon => "weapon",
        }
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "person" => Ok(Target::Person),
            "weapon" => Ok(Target::Weapon),
            other => Err(Error::Parse(format!("unknown target {other:?}"))),
        }
    }
}

/// Zoom and clutter of a stimulus, as known from ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Scene {
    pub zoom: Level,
    pub clutter: Level,
}

impl Scene {
    pub fn new(zoom: Level, clutter: Level) -> Self {
        Self { zoom, clutter }
    }

    /// All nine zoom x clutter combinations.
    pub fn all() -> impl Iterator<Item = Scene> {
        Level::ALL
            .into_iter()
            .flat_map(|zoom| Level::ALL.into_iter().map(move |clutter| Scene { zoom, clutter }))
    }

    pub fn with_target(self, target: Target) -> Setting {
        Setting { zoom: self.zoom, clutter: self.clutter, target }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Setting {
    pub zoom: Level,
    pub clutter: Level,
    pub target: Target,
}

impl Setting {
    pub fn new(zoom: Level, clutter: Level, target: Target) -> Self {
        Self { zoom, clutter, target }
    }

    pub fn scene(&self) -> Scene {
        Scene { zoom: self.zoom, clutter: self.clutter }
    }

    pub fn all() -> impl Iterator<Item = Setting> {
        Scene::all().flat_map(|s| Target::ALL.into_iter().map(move |t| s.with_target(t)))
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} zoom/{} clutter/{}",
            self.zoom.as_str(),
            self.clutter.as_str(),
            self.target.as_str()
        )
    }
}
