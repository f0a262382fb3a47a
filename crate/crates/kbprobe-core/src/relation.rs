//! The closed 21-relation set and the per-relation profile table.
//!
//! The profile table controls everything downstream: whether a relation is
//! entity- or number-valued, which disambiguation strategy the improved mode
//! dispatches to, which keyword terms or hard-coded overrides that strategy
//! consumes, and which context sources the retrieval-augmented setting pulls
//! in. It ships as a checked-in JSON asset so strategy experiments only need
//! a config edit, not a rebuild.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Default JSON profile table compiled into the crate.
pub const BUILTIN_PROFILES_JSON: &str = include_str!("../assets/profiles.json");

macro_rules! relations {
    ($($name:ident),+ $(,)?) => {
        /// One of the 21 supported relation names. The spelling of each
        /// variant is exactly the string used in the dataset files.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum RelationId {
            $($name,)+
        }

        impl RelationId {
            /// Every relation, in stable (alphabetical) order.
            pub const ALL: [RelationId; 21] = [$(RelationId::$name,)+];

            pub fn as_str(&self) -> &'static str {
                match self {
                    $(RelationId::$name => stringify!($name),)+
                }
            }

            pub fn parse(s: &str) -> Result<RelationId, UnknownRelation> {
                match s {
                    $(stringify!($name) => Ok(RelationId::$name),)+
                    _ => Err(UnknownRelation { name: s.to_string() }),
                }
            }
        }
    };
}

relations!(
    BandHasMember,
    CityLocatedAtRiver,
    CompanyHasParentOrganisation,
    CompoundHasParts,
    CountryBordersCountry,
    CountryHasOfficialLanguage,
    CountryHasStates,
    FootballerPlaysPosition,
    PersonCauseOfDeath,
    PersonHasAutobiography,
    PersonHasEmployer,
    PersonHasNobelPrize,
    PersonHasNumberOfChildren,
    PersonHasPlaceOfDeath,
    PersonHasProfession,
    PersonHasSpouse,
    PersonPlaysInstrument,
    PersonSpeaksLanguage,
    RiverBasinsCountry,
    SeriesHasNumberOfEpisodes,
    StateBordersState,
);

impl core::fmt::Display for RelationId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for RelationId {
    type Err = UnknownRelation;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RelationId::parse(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown relation name `{name}`")]
pub struct UnknownRelation {
    pub name: String,
}

/// Whether a relation's objects are Wikidata entities or plain numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Entity,
    Numeric,
}

/// Disambiguation strategy dispatched per relation in improved mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Baseline,
    Case,
    Keyword,
    Lm,
    None,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::Case => "case",
            Strategy::Keyword => "keyword",
            Strategy::Lm => "lm",
            Strategy::None => "none",
        }
    }
}

/// Which sources the retrieval-augmented setting assembles for a relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextPolicy {
    WikipediaDefault,
    WikipediaAdminDivision,
    WikipediaPlusImdb,
    None,
}

/// Static per-relation metadata consulted by every pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationProfile {
    pub relation: RelationId,
    /// `Some(true)` when the relation is known to admit zero objects,
    /// `None` when unknown. No relation is currently marked `Some(false)`;
    /// the distinction is kept so config can assert non-nullability later.
    pub nullable: Option<bool>,
    pub value_kind: ValueKind,
    pub disambiguation: Strategy,
    pub keyword_terms: Vec<String>,
    /// Lowercased object label -> QID, consulted by the case strategy.
    pub case_overrides: BTreeMap<String, String>,
    pub context_policy: ContextPolicy,
}

/// On-disk shape of one profile entry (keyed by relation name in the file).
#[derive(Debug, Deserialize)]
struct ProfileEntry {
    #[serde(default)]
    nullable: Option<bool>,
    value_kind: ValueKind,
    disambiguation: Strategy,
    #[serde(default)]
    keyword_terms: Vec<String>,
    #[serde(default)]
    case_overrides: BTreeMap<String, String>,
    context_policy: ContextPolicy,
    #[serde(default, rename = "note")]
    _note: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error("profile table is not valid JSON: {0}")]
    Json(String),
    #[error("profile table has unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("profile table is missing relation `{0}`")]
    MissingRelation(RelationId),
    #[error("relation `{relation}` mixes value_kind {value_kind:?} with strategy {strategy:?}; numeric relations must use `none` and vice versa")]
    NumericStrategyMismatch {
        relation: RelationId,
        value_kind: ValueKind,
        strategy: Strategy,
    },
    #[error("relation `{relation}` declares keyword strategy with no keyword_terms")]
    EmptyKeywords { relation: RelationId },
    #[error("case override for `{label}` under `{relation}` has malformed QID `{qid}`")]
    BadOverrideQid {
        relation: RelationId,
        label: String,
        qid: String,
    },
}

/// The validated, total profile table: exactly one profile per relation.
#[derive(Debug, Clone)]
pub struct ProfileTable {
    by_relation: BTreeMap<RelationId, RelationProfile>,
}

impl ProfileTable {
    /// Parse and validate a profile table from its JSON text.
    ///
    /// Validation enforces totality over the 21 relations and the structural
    /// invariants: numeric value kind if and only if strategy `none`, keyword
    /// strategy implies non-empty terms, and override targets look like QIDs.
    pub fn from_json(text: &str) -> Result<ProfileTable, ProfileError> {
        let raw: BTreeMap<String, ProfileEntry> =
            serde_json::from_str(text).map_err(|e| ProfileError::Json(e.to_string()))?;

        let mut by_relation = BTreeMap::new();
        for (name, entry) in raw {
            let relation = RelationId::parse(&name)
                .map_err(|e| ProfileError::UnknownRelation(e.name))?;
            let numeric = entry.value_kind == ValueKind::Numeric;
            let none_strategy = entry.disambiguation == Strategy::None;
            if numeric != none_strategy {
                return Err(ProfileError::NumericStrategyMismatch {
                    relation,
                    value_kind: entry.value_kind,
                    strategy: entry.disambiguation,
                });
            }
            if entry.disambiguation == Strategy::Keyword && entry.keyword_terms.is_empty() {
                return Err(ProfileError::EmptyKeywords { relation });
            }
            let mut case_overrides = BTreeMap::new();
            for (label, qid) in entry.case_overrides {
                if !crate::record::is_valid_qid(&qid) {
                    return Err(ProfileError::BadOverrideQid {
                        relation,
                        label,
                        qid,
                    });
                }
                case_overrides.insert(label.to_lowercase(), qid);
            }
            by_relation.insert(
                relation,
                RelationProfile {
                    relation,
                    nullable: entry.nullable,
                    value_kind: entry.value_kind,
                    disambiguation: entry.disambiguation,
                    keyword_terms: entry.keyword_terms,
                    case_overrides,
                    context_policy: entry.context_policy,
                },
            );
        }

        for relation in RelationId::ALL {
            if !by_relation.contains_key(&relation) {
                return Err(ProfileError::MissingRelation(relation));
            }
        }
        Ok(ProfileTable { by_relation })
    }

    /// The compiled-in default table.
    pub fn builtin() -> ProfileTable {
        ProfileTable::from_json(BUILTIN_PROFILES_JSON)
            .expect("builtin profile table must validate")
    }

    /// Total over the relation enum: every relation has a profile.
    pub fn profile(&self, relation: RelationId) -> &RelationProfile {
        self.by_relation
            .get(&relation)
            .expect("table validated total at construction")
    }

    pub fn iter(&self) -> impl Iterator<Item = &RelationProfile> {
        self.by_relation.values()
    }
}
