use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Search-term categories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Food,
    Tourism,
    Services,
    Home,
    #[serde(rename = "Personal care")]
    PersonalCare,
    Transport,
    Technology,
    Recreation,
    Education,
    Finance,
}

impl Category {
    pub const ALL: [Category; 10] = [
        Category::Food,
        Category::Tourism,
        Category::Services,
        Category::Home,
        Category::PersonalCare,
        Category::Transport,
        Category::Technology,
        Category::Recreation,
        Category::Education,
        Category::Finance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Food => "Food",
            Category::Tourism => "Tourism",
            Category::Services => "Services",
            Category::Home => "Home",
            Category::PersonalCare => "Personal care",
            Category::Transport => "Transport",
            Category::Technology => "Technology",
            Category::Recreation => "Recreation",
            Category::Education => "Education",
            Category::Finance => "Finance",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Category::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown category '{s}'")))
    }
}

/// Which indicator a term feeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Consumption index.
    Itacons,
    /// Commerce-and-services index.
    Itacome,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Itacons => "ITACons",
            Variant::Itacome => "ITACome",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "itacons" => Ok(Variant::Itacons),
            "itacome" => Ok(Variant::Itacome),
            _ => Err(Error::Config(format!("unknown variant '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VocabularyEntry {
    pub term: String,
    pub category: Category,
    pub in_consumption_index: bool,
    pub in_commerce_index: bool,
}

impl VocabularyEntry {
    pub fn in_variant(&self, variant: Variant) -> bool {
        match variant {
            Variant::Itacons => self.in_consumption_index,
            Variant::Itacome => self.in_commerce_index,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    pub entries: Vec<VocabularyEntry>,
}

const SHIPPED: &str = include_str!("../../data/vocabulary.csv");

impl Vocabulary {
    /// The bundled term list.
    pub fn shipped() -> Self {
        Self::parse(SHIPPED.as_bytes()).expect("bundled vocabulary is valid")
    }

    /// Parses `term,category,itacons,itacome` with `1`/`0` flags.
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(bytes);
        let header = reader.headers().map_err(|e| Error::Parse {
            row: 0,
            message: e.to_string(),
        })?;
        if header.iter().collect::<Vec<_>>() != ["term", "category", "itacons", "itacome"] {
            return Err(Error::Parse {
                row: 0,
                message: "expected header 'term,category,itacons,itacome'".into(),
            });
        }
        let flag = |s: &str, row: usize| match s {
            "1" => Ok(true),
            "0" => Ok(false),
            other => Err(Error::Parse {
                row,
                message: format!("flag must be 1 or 0, got '{other}'"),
            }),
        };
        let mut entries = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| Error::Parse {
                row,
                message: e.to_string(),
            })?;
            if rec.len() != 4 {
                return Err(Error::Parse {
                    row,
                    message: "expected 4 fields".into(),
                });
            }
            let category = rec[1].parse().map_err(|_| Error::Parse {
                row,
                message: format!("unknown category '{}'", &rec[1]),
            })?;
            entries.push(VocabularyEntry {
                term: rec[0].to_string(),
                category,
                in_consumption_index: flag(&rec[2], row)?,
                in_commerce_index: flag(&rec[3], row)?,
            });
        }
        Ok(Vocabulary { entries })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("term,category,itacons,itacome\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.term,
                e.category,
                e.in_consumption_index as u8,
                e.in_commerce_index as u8
            ));
        }
        out
    }

    pub fn get(&self, term: &str) -> Option<&VocabularyEntry> {
        self.entries.iter().find(|e| e.term == term)
    }

    pub fn terms(&self, variant: Variant) -> Vec<&VocabularyEntry> {
        self.entries.iter().filter(|e| e.in_variant(variant)).collect()
    }

    /// Categories in first-appearance order.
    pub fn categories(&self) -> Vec<Category> {
        let mut out: Vec<Category> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.category) {
                out.push(e.category);
            }
        }
        out
    }

    /// SHA-256 over the newline-joined term list.
    pub fn hash(&self) -> String {
        term_list_hash(self.entries.iter().map(|e| e.term.as_str()))
    }
}

pub fn term_list_hash<'a>(terms: impl IntoIterator<Item = &'a str>) -> String {
    let mut h = Sha256::new();
    for t in terms {
        h.update(t.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// File-name slug for a term: lowercase ASCII, other characters mapped to `_`.
pub fn slug(term: &str) -> String {
    let mut out = String::new();
    for ch in term.trim().chars().flat_map(char::to_lowercase) {
        let c = match ch {
            'á' | 'à' | 'ä' | 'â' => 'a',
            'é' | 'è' | 'ë' | 'ê' => 'e',
            'í' | 'ì' | 'ï' | 'î' => 'i',
            'ó' | 'ò' | 'ö' | 'ô' => 'o',
            'ú' | 'ù' | 'ü' | 'û' => 'u',
            'ñ' => 'n',
            c if c.is_ascii_alphanumeric() => c,
            _ => '_',
        };
        out.push(c);
    }
    out
}
