//! Domain types shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The two news venues under study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VenueId {
    Nyt,
    Fox,
}

impl VenueId {
    pub const ALL: [VenueId; 2] = [VenueId::Nyt, VenueId::Fox];

    pub fn as_str(self) -> &'static str {
        match self {
            VenueId::Nyt => "nyt",
            VenueId::Fox => "fox",
        }
    }

    /// Public host of the venue's live site.
    pub fn host(self) -> &'static str {
        match self {
            VenueId::Nyt => "www.nytimes.com",
            VenueId::Fox => "www.foxnews.com",
        }
    }
}

impl fmt::Display for VenueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VenueId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nyt" => Ok(VenueId::Nyt),
            "fox" => Ok(VenueId::Fox),
            other => Err(format!("unknown venue `{other}` (expected nyt or fox)")),
        }
    }
}

/// Canonical article category after merging venue-specific sections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CategoryLabel {
    Art,
    Sport,
    Food,
    Travel,
    Opinion,
    Politics,
    Science,
    Technology,
    US,
    World,
}

impl CategoryLabel {
    pub const ALL: [CategoryLabel; 10] = [
        CategoryLabel::Art,
        CategoryLabel::Sport,
        CategoryLabel::Food,
        CategoryLabel::Travel,
        CategoryLabel::Opinion,
        CategoryLabel::Politics,
        CategoryLabel::Science,
        CategoryLabel::Technology,
        CategoryLabel::US,
        CategoryLabel::World,
    ];

    /// Categories whose images feed the representation analysis.
    pub const IMAGE_CATEGORIES: [CategoryLabel; 4] = [
        CategoryLabel::Art,
        CategoryLabel::Sport,
        CategoryLabel::Food,
        CategoryLabel::Travel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CategoryLabel::Art => "Art",
            CategoryLabel::Sport => "Sport",
            CategoryLabel::Food => "Food",
            CategoryLabel::Travel => "Travel",
            CategoryLabel::Opinion => "Opinion",
            CategoryLabel::Politics => "Politics",
            CategoryLabel::Science => "Science",
            CategoryLabel::Technology => "Technology",
            CategoryLabel::US => "US",
            CategoryLabel::World => "World",
        }
    }
}

impl fmt::Display for CategoryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Binary gender label as emitted by an external predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Male, Gender::Female];

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "Male",
            Gender::Female => "Female",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "male" | "man" => Ok(Gender::Male),
            "female" | "woman" => Ok(Gender::Female),
            other => Err(format!("unknown gender `{other}`")),
        }
    }
}
