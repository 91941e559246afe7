use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

macro_rules! segment_classes {
    ($($variant:ident => $name:literal),+ $(,)?) => {
        /// Coronary segment label in SYNTAX numbering, plus background.
        ///
        /// Declaration order follows the conventional label listing, which is
        /// also the order of category ids (1-based) in the annotation files.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum SegmentClass {
            $($variant,)+
            Background,
        }

        impl SegmentClass {
            /// The 25 segment labels, excluding background.
            pub const SEGMENTS: [SegmentClass; 25] = [$(SegmentClass::$variant,)+];

            pub fn name(self) -> &'static str {
                match self {
                    $(SegmentClass::$variant => $name,)+
                    SegmentClass::Background => "background",
                }
            }
        }

        impl FromStr for SegmentClass {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self, Error> {
                match s.trim() {
                    $($name => Ok(SegmentClass::$variant),)+
                    "background" => Ok(SegmentClass::Background),
                    other => Err(Error::UnknownClass(other.to_string())),
                }
            }
        }
    };
}

segment_classes! {
    S1 => "1",
    S2 => "2",
    S3 => "3",
    S4 => "4",
    S5 => "5",
    S6 => "6",
    S7 => "7",
    S8 => "8",
    S9 => "9",
    S9a => "9a",
    S10 => "10",
    S10a => "10a",
    S11 => "11",
    S12 => "12",
    S12a => "12a",
    S12b => "12b",
    S13 => "13",
    S14 => "14",
    S14a => "14a",
    S14b => "14b",
    S15 => "15",
    S16 => "16",
    S16a => "16a",
    S16b => "16b",
    S16c => "16c",
}

impl SegmentClass {
    pub fn is_background(self) -> bool {
        self == SegmentClass::Background
    }

    /// Conventional 1-based category id; `None` for background.
    pub fn category_id(self) -> Option<u64> {
        Self::SEGMENTS.iter().position(|&c| c == self).map(|i| i as u64 + 1)
    }

    pub fn from_category_id(id: u64) -> Option<Self> {
        id.checked_sub(1).and_then(|i| Self::SEGMENTS.get(i as usize)).copied()
    }
}

impl fmt::Display for SegmentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for SegmentClass {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for SegmentClass {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a list of label strings, rejecting unknown labels and background.
pub fn parse_class_list<S: AsRef<str>>(labels: &[S]) -> Result<Vec<SegmentClass>, Error> {
    labels
        .iter()
        .map(|s| {
            let c: SegmentClass = s.as_ref().parse()?;
            if c.is_background() {
                Err(Error::UnknownClass(s.as_ref().to_string()))
            } else {
                Ok(c)
            }
        })
        .collect()
}
