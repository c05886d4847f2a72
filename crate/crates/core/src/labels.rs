//! Closed label sets for face and text classification.
//!
//! Every enum parses case-insensitively and ignores spaces, hyphens and
//! underscores, so `"middle eastern"`, `"Middle-Eastern"` and
//! `"MiddleEastern"` all resolve to the same variant. Serde uses the
//! canonical display string.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Error for a string outside a closed label set.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("`{value}` is not a valid {set} label")]
pub struct UnknownLabel {
    pub set: &'static str,
    pub value: String,
}

fn squash(s: &str) -> String {
    s.chars()
        .filter(|c| !matches!(c, ' ' | '-' | '_' | '\t'))
        .flat_map(char::to_lowercase)
        .collect()
}

macro_rules! closed_label {
    ($(#[$meta:meta])* $name:ident, $set:literal, { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            pub fn index(self) -> usize {
                self as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = UnknownLabel;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let key = squash(s);
                $(
                    if key == squash($text) {
                        return Ok($name::$variant);
                    }
                )+
                Err(UnknownLabel { set: $set, value: s.to_string() })
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

closed_label!(
    /// Seven-way race taxonomy of the face training data, in fixed tie-break order.
    RaceLabel7, "race7", {
        Black => "Black",
        EastAsian => "East Asian",
        Indian => "Indian",
        Latinx => "Latinx",
        MiddleEastern => "Middle Eastern",
        SoutheastAsian => "Southeast Asian",
        White => "White",
    }
);

closed_label!(
    /// Six-way race taxonomy used in all reported statistics.
    RaceLabel6, "race6", {
        Asian => "Asian",
        Black => "Black",
        Indian => "Indian",
        Latinx => "Latinx",
        MiddleEastern => "Middle Eastern",
        White => "White",
    }
);

/// Race referenced in article text; shares the six-way taxonomy.
pub type RaceMention = RaceLabel6;

impl RaceLabel7 {
    /// Collapses East and Southeast Asian into a single Asian group.
    pub fn merge_to_six(self) -> RaceLabel6 {
        match self {
            RaceLabel7::Black => RaceLabel6::Black,
            RaceLabel7::EastAsian | RaceLabel7::SoutheastAsian => RaceLabel6::Asian,
            RaceLabel7::Indian => RaceLabel6::Indian,
            RaceLabel7::Latinx => RaceLabel6::Latinx,
            RaceLabel7::MiddleEastern => RaceLabel6::MiddleEastern,
            RaceLabel7::White => RaceLabel6::White,
        }
    }
}

impl RaceLabel6 {
    /// Every group except White.
    pub fn minorities() -> impl Iterator<Item = RaceLabel6> {
        RaceLabel6::ALL.iter().copied().filter(|r| *r != RaceLabel6::White)
    }
}

closed_label!(
    /// Age brackets of the age head, youngest first.
    AgeBracket, "age bracket", {
        A0_9 => "0-9",
        A10_19 => "10-19",
        A20_39 => "20-39",
        A40_59 => "40-59",
        A60Plus => "60+",
    }
);

impl AgeBracket {
    /// Representative age in years; the open bracket uses 70.
    pub fn midpoint(self) -> f64 {
        match self {
            AgeBracket::A0_9 => 4.5,
            AgeBracket::A10_19 => 14.5,
            AgeBracket::A20_39 => 29.5,
            AgeBracket::A40_59 => 49.5,
            AgeBracket::A60Plus => 70.0,
        }
    }
}

closed_label!(
    EmotionLabel, "emotion", {
        Neutral => "Neutral",
        Disgust => "Disgust",
        Fear => "Fear",
        Joy => "Joy",
        Anger => "Anger",
        Sadness => "Sadness",
        Surprise => "Surprise",
    }
);

impl EmotionLabel {
    pub fn non_neutral() -> impl Iterator<Item = EmotionLabel> {
        EmotionLabel::ALL.iter().copied().filter(|e| *e != EmotionLabel::Neutral)
    }
}

closed_label!(
    SentimentLabel, "sentiment", {
        Positive => "Positive",
        Negative => "Negative",
    }
);

closed_label!(
    TopicLabel, "topic", {
        Animals => "Animals",
        Agriculture => "Agriculture",
        Celebrations => "Celebrations",
        Disaster => "Disaster",
        Disease => "Disease",
        Economics => "Economics",
        Education => "Education",
        Entertainment => "Entertainment",
        Environment => "Environment",
        Finance => "Finance",
        Food => "Food",
        Health => "Health",
        Immigration => "Immigration",
        Inventions => "Inventions",
        Manufacturing => "Manufacturing",
        Movie => "Movie",
        Politics => "Politics",
        Poverty => "Poverty",
        Science => "Science",
        Sport => "Sport",
        Technology => "Technology",
        Terrorism => "Terrorism",
        Violence => "Violence",
        War => "War",
        Weather => "Weather",
    }
);

closed_label!(
    /// Victim answer: a race, an unspecified race, or no victim at all.
    VictimLabel, "victim", {
        Asian => "Asian",
        MiddleEastern => "Middle Eastern",
        Black => "Black",
        White => "White",
        Indian => "Indian",
        Latinx => "Latinx",
        Unspecified => "Unspecified",
        NoVictim => "No victim",
    }
);

closed_label!(
    /// Perpetrator answer: a race, an unspecified race, or no perpetrator.
    PerpetratorLabel, "perpetrator", {
        Asian => "Asian",
        MiddleEastern => "Middle Eastern",
        Black => "Black",
        White => "White",
        Indian => "Indian",
        Latinx => "Latinx",
        Unspecified => "Unspecified",
        NoPerpetrator => "No perpetrator",
    }
);

impl VictimLabel {
    pub fn race(self) -> Option<RaceLabel6> {
        self.as_str().parse().ok()
    }
}

impl PerpetratorLabel {
    pub fn race(self) -> Option<RaceLabel6> {
        self.as_str().parse().ok()
    }
}

impl From<RaceLabel6> for VictimLabel {
    fn from(r: RaceLabel6) -> Self {
        r.as_str().parse().expect("every race is a victim option")
    }
}

impl From<RaceLabel6> for PerpetratorLabel {
    fn from(r: RaceLabel6) -> Self {
        r.as_str().parse().expect("every race is a perpetrator option")
    }
}
