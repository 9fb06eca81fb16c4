//! Building Block models: typed attribute dictionaries describing the user,
//! caregiver, environment and robot of one caregiving scenario.
//!
//! Every block is an ordered `key -> value` dictionary. Numeric values always
//! carry a unit tag; conversion to radians/meters happens only when a
//! planner-facing quantity such as [`HeadPoseManifold`] is derived.

use std::f64::consts::PI;
use std::fmt;

use indexmap::IndexMap;
use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::to_canonical_string;
use crate::transfer::HeadPose;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlockError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("missing active neck ROM entry `{0}`")]
    MissingRom(String),
    #[error("expected a {expected} block, found {found}")]
    WrongKind { expected: BlockKind, found: BlockKind },
}

pub type Result<T, E = BlockError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BlockKind {
    UserFunctionality,
    UserBehavior,
    CaregiverFunctionality,
    CaregiverBehavior,
    Environment,
    Robot,
}

impl BlockKind {
    pub const ALL: [BlockKind; 6] = [
        BlockKind::UserFunctionality,
        BlockKind::UserBehavior,
        BlockKind::CaregiverFunctionality,
        BlockKind::CaregiverBehavior,
        BlockKind::Environment,
        BlockKind::Robot,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::UserFunctionality => "UserFunctionality",
            BlockKind::UserBehavior => "UserBehavior",
            BlockKind::CaregiverFunctionality => "CaregiverFunctionality",
            BlockKind::CaregiverBehavior => "CaregiverBehavior",
            BlockKind::Environment => "Environment",
            BlockKind::Robot => "Robot",
        }
    }

    /// Caregiver models are optional in a scenario; the other four are not.
    pub fn is_required(self) -> bool {
        !matches!(self, BlockKind::CaregiverFunctionality | BlockKind::CaregiverBehavior)
    }

    fn parse(s: &str) -> Result<Self> {
        BlockKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| BlockError::Schema(format!("unknown block kind `{s}`")))
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Deg,
    Rad,
    Cm,
    Kg,
    Grade,
    Unitless,
}

impl Unit {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "deg" => Unit::Deg,
            "rad" => Unit::Rad,
            "cm" => Unit::Cm,
            "kg" => Unit::Kg,
            "grade" => Unit::Grade,
            "unitless" => Unit::Unitless,
            other => return Err(BlockError::Schema(format!("unknown unit tag `{other}`"))),
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Unit::Deg => "deg",
            Unit::Rad => "rad",
            Unit::Cm => "cm",
            Unit::Kg => "kg",
            Unit::Grade => "grade",
            Unit::Unitless => "unitless",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity {
    pub value: f64,
    pub unit: Unit,
}

impl Quantity {
    pub fn new(value: f64, unit: Unit) -> Self {
        Self { value, unit }
    }

    pub fn deg(value: f64) -> Self {
        Self::new(value, Unit::Deg)
    }

    /// Angle in radians, if this is an angular quantity.
    pub fn radians(&self) -> Option<f64> {
        match self.unit {
            Unit::Deg => Some(self.value.to_radians()),
            Unit::Rad => Some(self.value),
            _ => None,
        }
    }

    pub fn degrees(&self) -> Option<f64> {
        self.radians().map(f64::to_degrees)
    }

    /// Length in meters, if this is a length.
    pub fn meters(&self) -> Option<f64> {
        match self.unit {
            Unit::Cm => Some(self.value / 100.0),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttributeValue {
    Scalar(Quantity),
    Text(String),
    Flag(bool),
    List { values: Vec<f64>, unit: Unit },
    Map(IndexMap<String, AttributeValue>),
}

impl AttributeValue {
    pub fn as_scalar(&self) -> Option<Quantity> {
        match self {
            AttributeValue::Scalar(q) => Some(*q),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            AttributeValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_flag(&self) -> Option<bool> {
        match self {
            AttributeValue::Flag(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_map(&self) -> Option<&IndexMap<String, AttributeValue>> {
        match self {
            AttributeValue::Map(m) => Some(m),
            _ => None,
        }
    }
}

impl From<Quantity> for AttributeValue {
    fn from(q: Quantity) -> Self {
        AttributeValue::Scalar(q)
    }
}

impl From<&str> for AttributeValue {
    fn from(s: &str) -> Self {
        AttributeValue::Text(s.to_owned())
    }
}

impl From<bool> for AttributeValue {
    fn from(b: bool) -> Self {
        AttributeValue::Flag(b)
    }
}

// Entry encoding: `{"value": <v>, "unit": "<tag>"}`; `unit` is present only
// for numeric values and lists of numbers.
impl Serialize for AttributeValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(None)?;
        match self {
            AttributeValue::Scalar(q) => {
                map.serialize_entry("value", &q.value)?;
                map.serialize_entry("unit", q.unit.as_str())?;
            }
            AttributeValue::Text(s) => map.serialize_entry("value", s)?,
            AttributeValue::Flag(b) => map.serialize_entry("value", b)?,
            AttributeValue::List { values, unit } => {
                map.serialize_entry("value", values)?;
                map.serialize_entry("unit", unit.as_str())?;
            }
            AttributeValue::Map(entries) => map.serialize_entry("value", entries)?,
        }
        map.end()
    }
}

/// One ROM measurement motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Motion {
    Flexion,
    Extension,
    RotationLeft,
    RotationRight,
    LateralFlexionLeft,
    LateralFlexionRight,
}

impl Motion {
    pub const ALL: [Motion; 6] = [
        Motion::Flexion,
        Motion::Extension,
        Motion::RotationLeft,
        Motion::RotationRight,
        Motion::LateralFlexionLeft,
        Motion::LateralFlexionRight,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Motion::Flexion => "Flexion",
            Motion::Extension => "Extension",
            Motion::RotationLeft => "RotationLeft",
            Motion::RotationRight => "RotationRight",
            Motion::LateralFlexionLeft => "LateralFlexionLeft",
            Motion::LateralFlexionRight => "LateralFlexionRight",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Motion::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RomMode {
    Active,
    Passive,
}

impl RomMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RomMode::Active => "Active",
            RomMode::Passive => "Passive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RomEntry {
    pub joint: String,
    pub motion: Motion,
    pub mode: RomMode,
    pub limit_deg: f64,
}

impl RomEntry {
    /// Key under which this entry is stored: `"<Mode> ROM <Joint> <Motion>"`.
    pub fn key(&self) -> String {
        rom_key(self.mode, &self.joint, self.motion)
    }
}

pub fn rom_key(mode: RomMode, joint: &str, motion: Motion) -> String {
    format!("{} ROM {} {}", mode.as_str(), joint, motion.as_str())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmtEntry {
    pub muscle_group: String,
    pub grade: u8,
}

const MMT_PREFIX: &str = "MMT ";

/// Splits a ROM key into (mode, joint, motion). `None` when the key is not in
/// the ROM family at all; an error when it claims to be but is malformed.
fn parse_rom_key(key: &str) -> Result<Option<(RomMode, String, Motion)>> {
    let (mode, rest) = if let Some(rest) = key.strip_prefix("Active ROM ") {
        (RomMode::Active, rest)
    } else if let Some(rest) = key.strip_prefix("Passive ROM ") {
        (RomMode::Passive, rest)
    } else {
        return Ok(None);
    };
    let malformed = || BlockError::Schema(format!("malformed ROM key `{key}`"));
    let (joint, motion) = rest.rsplit_once(' ').ok_or_else(malformed)?;
    let motion = Motion::parse(motion).ok_or_else(malformed)?;
    if joint.trim().is_empty() {
        return Err(malformed());
    }
    Ok(Some((mode, joint.to_owned(), motion)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildingBlock {
    kind: BlockKind,
    entries: IndexMap<String, AttributeValue>,
}

impl BuildingBlock {
    /// Builds a block and checks every key-family invariant.
    pub fn new(kind: BlockKind, entries: IndexMap<String, AttributeValue>) -> Result<Self> {
        let block = Self { kind, entries };
        block.validate()?;
        Ok(block)
    }

    pub fn empty(kind: BlockKind) -> Self {
        Self { kind, entries: IndexMap::new() }
    }

    pub fn kind(&self) -> BlockKind {
        self.kind
    }

    pub fn entries(&self) -> &IndexMap<String, AttributeValue> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get_attribute(&self, key: &str) -> Option<&AttributeValue> {
        self.entries.get(key)
    }

    /// Insert-or-replace. Existing keys keep their position; the receiver is
    /// left untouched and a new block is returned.
    pub fn set_attribute(&self, key: &str, value: impl Into<AttributeValue>) -> Result<Self> {
        let mut entries = self.entries.clone();
        entries.insert(key.to_owned(), value.into());
        Self::new(self.kind, entries)
    }

    pub fn rom_entries(&self) -> Vec<RomEntry> {
        self.entries
            .iter()
            .filter_map(|(key, value)| {
                let (mode, joint, motion) = parse_rom_key(key).ok().flatten()?;
                let limit_deg = value.as_scalar()?.degrees()?;
                Some(RomEntry { joint, motion, mode, limit_deg })
            })
            .collect()
    }

    pub fn mmt_entries(&self) -> Vec<MmtEntry> {
        self.entries
            .iter()
            .filter_map(|(key, value)| {
                let group = key.strip_prefix(MMT_PREFIX)?;
                let q = value.as_scalar()?;
                Some(MmtEntry { muscle_group: group.to_owned(), grade: q.value as u8 })
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let mut active: Vec<(String, Motion, f64)> = Vec::new();
        let mut passive: Vec<(String, Motion, f64)> = Vec::new();
        for (key, value) in &self.entries {
            validate_value(key, value)?;
            if let Some((mode, joint, motion)) = parse_rom_key(key)? {
                let q = value
                    .as_scalar()
                    .ok_or_else(|| BlockError::Schema(format!("ROM entry `{key}` must be a scalar angle")))?;
                let deg = q
                    .degrees()
                    .ok_or_else(|| BlockError::Schema(format!("ROM entry `{key}` must be tagged deg or rad")))?;
                if !(0.0..=180.0).contains(&deg) {
                    return Err(BlockError::Invariant(format!("ROM entry `{key}` = {deg} deg is outside [0, 180]")));
                }
                match mode {
                    RomMode::Active => active.push((joint, motion, deg)),
                    RomMode::Passive => passive.push((joint, motion, deg)),
                }
            } else if let Some(group) = key.strip_prefix(MMT_PREFIX) {
                if group.trim().is_empty() {
                    return Err(BlockError::Schema(format!("malformed MMT key `{key}`")));
                }
                match value.as_scalar() {
                    Some(q) if q.unit == Unit::Grade => {}
                    _ => return Err(BlockError::Schema(format!("MMT entry `{key}` must be a scalar tagged grade"))),
                }
            }
        }
        for (joint, motion, a) in &active {
            if let Some((_, _, p)) = passive.iter().find(|(j, m, _)| j == joint && m == motion) {
                if a > p {
                    return Err(BlockError::Invariant(format!(
                        "active ROM {joint} {} ({a} deg) exceeds passive ROM ({p} deg)",
                        motion.as_str()
                    )));
                }
            }
        }
        Ok(())
    }
}

fn validate_value(key: &str, value: &AttributeValue) -> Result<()> {
    if key.is_empty() {
        return Err(BlockError::Schema("attribute keys must be non-empty".into()));
    }
    match value {
        AttributeValue::Scalar(q) => {
            if !q.value.is_finite() {
                return Err(BlockError::Invariant(format!("`{key}` is not a finite number")));
            }
            if q.unit == Unit::Grade && (q.value.fract() != 0.0 || !(0.0..=5.0).contains(&q.value)) {
                return Err(BlockError::Invariant(format!("`{key}` grade {} is not an integer in 0..=5", q.value)));
            }
        }
        AttributeValue::List { values, .. } => {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(BlockError::Invariant(format!("`{key}` holds a non-finite number")));
            }
        }
        AttributeValue::Map(entries) => {
            for (k, v) in entries {
                validate_value(k, v)?;
            }
        }
        AttributeValue::Text(_) | AttributeValue::Flag(_) => {}
    }
    Ok(())
}

impl Serialize for BuildingBlock {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(2))?;
        map.serialize_entry("kind", self.kind.as_str())?;
        map.serialize_entry("entries", &self.entries)?;
        map.end()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildingBlockSet {
    pub scenario_id: String,
    blocks: Vec<BuildingBlock>,
}

impl BuildingBlockSet {
    pub fn new(scenario_id: impl Into<String>, blocks: Vec<BuildingBlock>) -> Result<Self> {
        let scenario_id = scenario_id.into();
        if scenario_id.is_empty() {
            return Err(BlockError::Schema("scenario_id must be non-empty".into()));
        }
        for (i, b) in blocks.iter().enumerate() {
            if blocks[..i].iter().any(|o| o.kind == b.kind) {
                return Err(BlockError::Invariant(format!("duplicate {} block", b.kind)));
            }
        }
        for kind in BlockKind::ALL.into_iter().filter(|k| k.is_required()) {
            if !blocks.iter().any(|b| b.kind == kind) {
                return Err(BlockError::Schema(format!("missing required {kind} block")));
            }
        }
        Ok(Self { scenario_id, blocks })
    }

    pub fn blocks(&self) -> &[BuildingBlock] {
        &self.blocks
    }

    pub fn get(&self, kind: BlockKind) -> Option<&BuildingBlock> {
        self.blocks.iter().find(|b| b.kind == kind)
    }

    /// Required blocks are guaranteed present by construction.
    pub fn user_functionality(&self) -> &BuildingBlock {
        self.get(BlockKind::UserFunctionality).expect("validated set")
    }

    pub fn user_behavior(&self) -> &BuildingBlock {
        self.get(BlockKind::UserBehavior).expect("validated set")
    }

    pub fn environment(&self) -> &BuildingBlock {
        self.get(BlockKind::Environment).expect("validated set")
    }

    pub fn robot(&self) -> &BuildingBlock {
        self.get(BlockKind::Robot).expect("validated set")
    }

    /// Replaces (or adds) the block of the same kind.
    pub fn with_block(&self, block: BuildingBlock) -> Self {
        let mut blocks = self.blocks.clone();
        match blocks.iter_mut().find(|b| b.kind == block.kind) {
            Some(slot) => *slot = block,
            None => blocks.push(block),
        }
        Self { scenario_id: self.scenario_id.clone(), blocks }
    }

    pub fn to_canonical(&self) -> String {
        to_canonical_string(self)
    }
}

impl Serialize for BuildingBlockSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(2))?;
        map.serialize_entry("scenario_id", &self.scenario_id)?;
        map.serialize_entry("blocks", &self.blocks)?;
        map.end()
    }
}

// ---- parsing ---------------------------------------------------------------

/// Ordered map that rejects duplicate keys instead of silently keeping the last.
struct UniqueMap<V>(IndexMap<String, V>);

impl<'de, V: Deserialize<'de>> Deserialize<'de> for UniqueMap<V> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct UniqueVisitor<V>(std::marker::PhantomData<V>);

        impl<'de, V: Deserialize<'de>> Visitor<'de> for UniqueVisitor<V> {
            type Value = UniqueMap<V>;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map with unique keys")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> std::result::Result<Self::Value, A::Error> {
                let mut out = IndexMap::new();
                while let Some((key, value)) = access.next_entry::<String, V>()? {
                    if out.contains_key(&key) {
                        return Err(de::Error::custom(format!("duplicate key `{key}`")));
                    }
                    out.insert(key, value);
                }
                Ok(UniqueMap(out))
            }
        }

        deserializer.deserialize_map(UniqueVisitor(std::marker::PhantomData))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawValue {
    Flag(bool),
    Number(f64),
    Text(String),
    List(Vec<f64>),
    Map(UniqueMap<RawEntry>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    value: RawValue,
    unit: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBlock {
    kind: String,
    entries: UniqueMap<RawEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    scenario_id: String,
    blocks: Vec<RawBlock>,
}

fn convert_entry(key: &str, raw: RawEntry) -> Result<AttributeValue> {
    let unit = raw.unit.as_deref().map(Unit::parse).transpose()?;
    let need_unit = || BlockError::Schema(format!("`{key}` is numeric but has no unit tag"));
    let no_unit = || BlockError::Schema(format!("`{key}` is not numeric and must not carry a unit"));
    Ok(match raw.value {
        RawValue::Number(value) => AttributeValue::Scalar(Quantity::new(value, unit.ok_or_else(need_unit)?)),
        RawValue::List(values) => AttributeValue::List { values, unit: unit.ok_or_else(need_unit)? },
        RawValue::Text(s) => {
            if unit.is_some() {
                return Err(no_unit());
            }
            AttributeValue::Text(s)
        }
        RawValue::Flag(b) => {
            if unit.is_some() {
                return Err(no_unit());
            }
            AttributeValue::Flag(b)
        }
        RawValue::Map(UniqueMap(entries)) => {
            if unit.is_some() {
                return Err(no_unit());
            }
            AttributeValue::Map(convert_entries(entries)?)
        }
    })
}

fn convert_entries(raw: IndexMap<String, RawEntry>) -> Result<IndexMap<String, AttributeValue>> {
    raw.into_iter()
        .map(|(k, v)| {
            let value = convert_entry(&k, v)?;
            Ok((k, value))
        })
        .collect()
}

fn convert_block(raw: RawBlock) -> Result<BuildingBlock> {
    let kind = BlockKind::parse(&raw.kind)?;
    BuildingBlock::new(kind, convert_entries(raw.entries.0)?)
}

fn schema_err(e: serde_json::Error) -> BlockError {
    BlockError::Schema(e.to_string())
}

/// Parses a scenario building-block document.
pub fn parse_building_blocks(document: &str) -> Result<BuildingBlockSet> {
    let raw: RawScenario = serde_json::from_str(document).map_err(schema_err)?;
    let blocks = raw.blocks.into_iter().map(convert_block).collect::<Result<Vec<_>>>()?;
    BuildingBlockSet::new(raw.scenario_id, blocks)
}

/// Parses a standalone `{kind, entries}` block document.
pub fn parse_block(document: &str) -> Result<BuildingBlock> {
    let raw: RawBlock = serde_json::from_str(document).map_err(schema_err)?;
    convert_block(raw)
}

// ---- head-pose manifold ----------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleRange {
    pub min: f64,
    pub max: f64,
}

impl AngleRange {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.min <= x && x <= self.max
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn is_subset_of(&self, other: &AngleRange) -> bool {
        other.min <= self.min && self.max <= other.max
    }

    fn is_valid(&self) -> bool {
        self.min <= self.max && self.min >= -PI && self.max <= PI && self.contains(0.0)
    }
}

/// Box of attainable neck angles. Extension is encoded as negative flexion,
/// left rotation / left lateral flexion as negative angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadPoseManifold {
    pub flexion: AngleRange,
    pub rotation: AngleRange,
    pub lateral: AngleRange,
}

const FULL_MOBILITY_DOC: &str = include_str!("../assets/full_mobility.json");

impl HeadPoseManifold {
    pub fn new(flexion: AngleRange, rotation: AngleRange, lateral: AngleRange) -> Result<Self> {
        for (name, r) in [("flexion", flexion), ("rotation", rotation), ("lateral", lateral)] {
            if !r.is_valid() {
                return Err(BlockError::Invariant(format!(
                    "{name} range [{}, {}] must be ordered, inside [-pi, pi] and contain 0",
                    r.min, r.max
                )));
            }
        }
        Ok(Self { flexion, rotation, lateral })
    }

    /// The normative full-mobility manifold shipped with the crate.
    pub fn full_mobility() -> Self {
        let block = parse_block(FULL_MOBILITY_DOC).expect("shipped full-mobility config is valid");
        head_pose_manifold(&block).expect("shipped full-mobility config is complete")
    }

    pub fn neutral_only() -> Self {
        let z = AngleRange::new(0.0, 0.0);
        Self { flexion: z, rotation: z, lateral: z }
    }

    pub fn contains(&self, pose: &HeadPose) -> bool {
        self.flexion.contains(pose.flexion)
            && self.rotation.contains(pose.rotation)
            && self.lateral.contains(pose.lateral)
    }

    pub fn is_subset_of(&self, other: &HeadPoseManifold) -> bool {
        self.flexion.is_subset_of(&other.flexion)
            && self.rotation.is_subset_of(&other.rotation)
            && self.lateral.is_subset_of(&other.lateral)
    }

    /// Uniform point of the box.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> HeadPose {
        let mut draw = |r: &AngleRange| if r.width() > 0.0 { rng.random_range(r.min..=r.max) } else { r.min };
        let flexion = draw(&self.flexion);
        let rotation = draw(&self.rotation);
        let lateral = draw(&self.lateral);
        HeadPose::new(flexion, rotation, lateral)
    }

    pub fn volume(&self) -> f64 {
        self.flexion.width() * self.rotation.width() * self.lateral.width()
    }
}

/// Derives the attainable head-pose box from the six active neck ROM limits.
pub fn head_pose_manifold(functionality: &BuildingBlock) -> Result<HeadPoseManifold> {
    if functionality.kind != BlockKind::UserFunctionality {
        return Err(BlockError::WrongKind { expected: BlockKind::UserFunctionality, found: functionality.kind });
    }
    let limit = |motion: Motion| -> Result<f64> {
        let key = rom_key(RomMode::Active, "Neck", motion);
        functionality
            .get_attribute(&key)
            .and_then(AttributeValue::as_scalar)
            .and_then(|q| q.radians())
            .ok_or(BlockError::MissingRom(key))
    };
    let flexion = AngleRange::new(-limit(Motion::Extension)?, limit(Motion::Flexion)?);
    let rotation = AngleRange::new(-limit(Motion::RotationLeft)?, limit(Motion::RotationRight)?);
    let lateral = AngleRange::new(-limit(Motion::LateralFlexionLeft)?, limit(Motion::LateralFlexionRight)?);
    HeadPoseManifold::new(flexion, rotation, lateral)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn neck_block(limits: [f64; 6]) -> BuildingBlock {
        let mut entries = IndexMap::new();
        for (m, l) in Motion::ALL.into_iter().zip(limits) {
            entries.insert(rom_key(RomMode::Active, "Neck", m), Quantity::deg(l).into());
        }
        BuildingBlock::new(BlockKind::UserFunctionality, entries).unwrap()
    }

    fn doc(entries: &str) -> String {
        format!(
            r#"{{"scenario_id": "t", "blocks": [
              {{"kind": "UserFunctionality", "entries": {entries}}},
              {{"kind": "UserBehavior", "entries": {{}}}},
              {{"kind": "Environment", "entries": {{}}}},
              {{"kind": "Robot", "entries": {{}}}}]}}"#
        )
    }

    #[test]
    fn empty_environment_is_valid() {
        let set = parse_building_blocks(&doc("{}")).unwrap();
        assert!(set.environment().is_empty());
    }

    #[test]
    fn active_above_passive_rejected() {
        let d = doc(r#"{"Active ROM Neck Flexion": {"value": 50, "unit": "deg"},
                "Passive ROM Neck Flexion": {"value": 40, "unit": "deg"}}"#);
        assert!(matches!(parse_building_blocks(&d), Err(BlockError::Invariant(_))));
    }

    #[test]
    fn missing_unit_and_unknown_kind_are_schema_errors() {
        let d = doc(r#"{"Weight": {"value": 50}}"#);
        assert!(matches!(parse_building_blocks(&d), Err(BlockError::Schema(_))));
        let d = doc("{}").replace("\"Robot\"", "\"Spaceship\"");
        assert!(matches!(parse_building_blocks(&d), Err(BlockError::Schema(_))));
        let d = doc(r#"{"Weight": {"value": 50, "unit": "furlong"}}"#);
        assert!(matches!(parse_building_blocks(&d), Err(BlockError::Schema(_))));
    }

    #[test]
    fn duplicate_keys_rejected() {
        let d = doc(r#"{"Weight": {"value": 50, "unit": "kg"}, "Weight": {"value": 51, "unit": "kg"}}"#);
        assert!(matches!(parse_building_blocks(&d), Err(BlockError::Schema(_))));
    }

    #[test]
    fn rom_limit_above_180_rejected() {
        let d = doc(r#"{"Active ROM Neck Flexion": {"value": 190, "unit": "deg"}}"#);
        assert!(matches!(parse_building_blocks(&d), Err(BlockError::Invariant(_))));
    }

    #[test]
    fn mmt_grade_out_of_range() {
        let b = BuildingBlock::empty(BlockKind::UserFunctionality);
        let err = b.set_attribute("MMT Neck Flexors", Quantity::new(7.0, Unit::Grade)).unwrap_err();
        assert!(matches!(err, BlockError::Invariant(_)));
        let ok = b.set_attribute("MMT Neck Flexors", Quantity::new(4.0, Unit::Grade)).unwrap();
        assert_eq!(ok.mmt_entries(), vec![MmtEntry { muscle_group: "Neck Flexors".into(), grade: 4 }]);
    }

    #[test]
    fn set_then_get_and_order_preserved() {
        let b = neck_block([30.0; 6]);
        let key = "Active ROM Neck RotationLeft";
        let b2 = b.set_attribute(key, Quantity::deg(40.0)).unwrap();
        assert_eq!(b2.get_attribute(key).unwrap().as_scalar().unwrap().value, 40.0);
        assert_eq!(b.get_attribute(key).unwrap().as_scalar().unwrap().value, 30.0);
        let keys: Vec<_> = b2.entries().keys().collect();
        let orig: Vec<_> = b.entries().keys().collect();
        assert_eq!(keys, orig);
        let m = head_pose_manifold(&b2).unwrap();
        assert!((m.rotation.min + 40f64.to_radians()).abs() < 1e-15);
        assert!(b.get_attribute("Nonexistent Key").is_none());
    }

    #[test]
    fn zero_mobility_collapses_to_neutral() {
        let m = head_pose_manifold(&neck_block([0.0; 6])).unwrap();
        assert_eq!(m, HeadPoseManifold::neutral_only());
        assert!(m.contains(&HeadPose::neutral()));
        assert!(!m.contains(&HeadPose::new(1e-9, 0.0, 0.0)));
    }

    #[test]
    fn manifold_requires_all_six_motions() {
        let mut entries = neck_block([10.0; 6]).entries().clone();
        entries.shift_remove("Active ROM Neck LateralFlexionRight");
        let b = BuildingBlock::new(BlockKind::UserFunctionality, entries).unwrap();
        assert_eq!(head_pose_manifold(&b), Err(BlockError::MissingRom("Active ROM Neck LateralFlexionRight".into())));
        let wrong = BuildingBlock::empty(BlockKind::Robot);
        assert!(matches!(head_pose_manifold(&wrong), Err(BlockError::WrongKind { .. })));
    }

    #[test]
    fn full_mobility_matches_shipped_constants() {
        let m = HeadPoseManifold::full_mobility();
        let r = f64::to_radians;
        assert_eq!(m.flexion, AngleRange::new(-r(60.0), r(50.0)));
        assert_eq!(m.rotation, AngleRange::new(-r(80.0), r(80.0)));
        assert_eq!(m.lateral, AngleRange::new(-r(45.0), r(45.0)));
    }

    #[test]
    fn nested_and_list_values_round_trip() {
        let d = doc(r#"{"Body": {"value": {"Height": {"value": 160, "unit": "cm"}, "Notes": {"value": "x"}}},
                "Arm Lengths": {"value": [30, 25.5], "unit": "cm"},
                "Uses Wheelchair": {"value": true}}"#);
        let set = parse_building_blocks(&d).unwrap();
        let once = set.to_canonical();
        let twice = parse_building_blocks(&once).unwrap().to_canonical();
        assert_eq!(once, twice);
        let muf = set.user_functionality();
        let body = muf.get_attribute("Body").unwrap().as_map().unwrap();
        assert_eq!(body["Height"].as_scalar().unwrap().meters(), Some(1.6));
        assert_eq!(muf.get_attribute("Uses Wheelchair").unwrap().as_flag(), Some(true));
    }

    #[test]
    fn malformed_rom_key() {
        let d = doc(r#"{"Active ROM Neck Twist": {"value": 10, "unit": "deg"}}"#);
        assert!(matches!(parse_building_blocks(&d), Err(BlockError::Schema(_))));
    }
}
