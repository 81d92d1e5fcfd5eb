//! Subtask schemas, synthetic entity databases and constraint queries.
//!
//! An [`Ontology`] is an ordered list of subtasks; each subtask declares its
//! slots (informable and/or requestable, with a value inventory) and how many
//! entities its database holds. Databases are generated deterministically from
//! `(spec, seed)` with a round-robin pass that guarantees every informable
//! value is reachable before per-slot shuffling.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::stream_rng;
use crate::{Error, Result};

/// Reserved value token meaning "any value is fine".
pub const DONTCARE: &str = "dontcare";

/// Current version of the ontology file format.
pub const ONTOLOGY_FORMAT_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Schema types
// ---------------------------------------------------------------------------

/// One slot of a subtask.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlotSpec {
    pub name: String,
    pub informable: bool,
    pub requestable: bool,
    /// Ordered value inventory. Informable slots need at least two values.
    pub values: Vec<String>,
}

impl SlotSpec {
    pub fn new(
        name: impl Into<String>,
        informable: bool,
        requestable: bool,
        values: Vec<String>,
    ) -> Self {
        Self {
            name: name.into(),
            informable,
            requestable,
            values,
        }
    }

    /// Opaque value tokens v0..v{n-1}.
    pub fn with_value_count(
        name: impl Into<String>,
        informable: bool,
        requestable: bool,
        n: usize,
    ) -> Self {
        Self::new(
            name,
            informable,
            requestable,
            (0..n).map(|i| format!("v{i}")).collect(),
        )
    }
}

/// Schema of one subtask: its slots plus the size of its entity database.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubtaskSpec {
    pub name: String,
    pub entity_count: usize,
    pub slots: Vec<SlotSpec>,
}

impl SubtaskSpec {
    pub fn slot_index(&self, slot: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.name == slot)
    }

    pub fn informable_slots(&self) -> impl Iterator<Item = (usize, &SlotSpec)> {
        self.slots.iter().enumerate().filter(|(_, s)| s.informable)
    }

    pub fn requestable_slots(&self) -> impl Iterator<Item = (usize, &SlotSpec)> {
        self.slots.iter().enumerate().filter(|(_, s)| s.requestable)
    }
}

/// A composite task: `K` subtasks, each with its own slot inventory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ontology {
    pub subtasks: Vec<SubtaskSpec>,
}

impl Ontology {
    pub fn new(subtasks: Vec<SubtaskSpec>) -> Self {
        Self { subtasks }
    }

    /// Number of subtasks (the symbol K).
    pub fn subtask_count(&self) -> usize {
        self.subtasks.len()
    }

    /// Informable-slot count of subtask `k` (the symbol n, which may differ
    /// across subtasks).
    pub fn informable_count(&self, k: usize) -> usize {
        self.subtasks[k].informable_slots().count()
    }

    pub fn subtask_index(&self, name: &str) -> Option<usize> {
        self.subtasks.iter().position(|s| s.name == name)
    }

    /// Concatenate two ontologies into one composite task.
    pub fn compose(a: Ontology, b: Ontology) -> Ontology {
        let mut subtasks = a.subtasks;
        subtasks.extend(b.subtasks);
        Ontology { subtasks }
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// One invariant violation, with a path to the offending element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

/// Result of [`validate_ontology`]; ok iff no violations.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, path: String, message: impl Into<String>) {
        self.violations.push(Violation {
            path,
            message: message.into(),
        });
    }
}

/// Check every schema invariant; violations are data, not failures.
pub fn validate_ontology(ontology: &Ontology) -> ValidationReport {
    let mut report = ValidationReport::default();
    if ontology.subtasks.is_empty() {
        report.push("ontology".into(), "no subtasks");
    }
    let mut subtask_names = BTreeSet::new();
    for (k, sub) in ontology.subtasks.iter().enumerate() {
        let spath = format!("subtasks[{k}] ({})", sub.name);
        if !subtask_names.insert(sub.name.clone()) {
            report.push(spath.clone(), format!("duplicate subtask '{}'", sub.name));
        }
        if sub.entity_count == 0 {
            report.push(spath.clone(), "entity_count must be positive");
        }
        if sub.informable_slots().next().is_none() {
            report.push(spath.clone(), "no informable slot");
        }
        if sub.requestable_slots().next().is_none() {
            report.push(spath.clone(), "no requestable slot");
        }
        let mut slot_names = BTreeSet::new();
        for (j, slot) in sub.slots.iter().enumerate() {
            let path = format!("{spath}.slots[{j}] ({})", slot.name);
            if !slot_names.insert(slot.name.clone()) {
                report.push(path.clone(), format!("duplicate slot '{}'", slot.name));
            }
            if slot.informable && slot.values.len() < 2 {
                report.push(
                    path.clone(),
                    "informable slot needs at least two values",
                );
            }
            let mut seen = BTreeSet::new();
            for v in &slot.values {
                if v == DONTCARE {
                    report.push(path.clone(), "value identifier 'dontcare' is reserved");
                }
                if !seen.insert(v.clone()) {
                    report.push(path.clone(), format!("duplicate value '{v}'"));
                }
            }
        }
    }
    report
}

// ---------------------------------------------------------------------------
// Entity database
// ---------------------------------------------------------------------------

/// Database for one subtask; `entities[e][j]` is the value index of slot `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubtaskDatabase {
    pub entities: Vec<Vec<usize>>,
}

/// Per-subtask entity tables, immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityDatabase {
    pub subtasks: Vec<SubtaskDatabase>,
}

/// A single constraint value: a concrete inventory index or dontcare.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    Value(usize),
    DontCare,
}

/// Generate a database for one subtask. Deterministic in `(spec, seed)`.
///
/// A round-robin assignment before the per-slot shuffle guarantees that every
/// value of a slot with cardinality <= entity_count is held by at least one
/// entity; for informable slots this is required and checked.
pub fn generate_database(spec: &SubtaskSpec, seed: u64) -> Result<SubtaskDatabase> {
    for (_, slot) in spec.informable_slots() {
        if slot.values.len() > spec.entity_count {
            return Err(Error::UnsatisfiableCoverage {
                entity_count: spec.entity_count,
                max_cardinality: slot.values.len(),
                slot: slot.name.clone(),
            });
        }
    }
    let mut rng = stream_rng(seed, "dbgen", 0);
    let mut columns: Vec<Vec<usize>> = Vec::with_capacity(spec.slots.len());
    for slot in &spec.slots {
        let card = slot.values.len().max(1);
        let mut column: Vec<usize> = (0..spec.entity_count).map(|e| e % card).collect();
        column.shuffle(&mut rng);
        columns.push(column);
    }
    let entities = (0..spec.entity_count)
        .map(|e| columns.iter().map(|c| c[e]).collect())
        .collect();
    Ok(SubtaskDatabase { entities })
}

/// Generate all subtask databases of an ontology from one seed.
pub fn generate_databases(ontology: &Ontology, seed: u64) -> Result<EntityDatabase> {
    let subtasks = ontology
        .subtasks
        .iter()
        .enumerate()
        .map(|(k, spec)| generate_database(spec, seed.wrapping_add(k as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EntityDatabase { subtasks })
}

impl EntityDatabase {
    /// Entities of subtask `k` matching index-keyed constraints, in database
    /// order. Dontcare matches anything.
    pub fn query_indices(&self, k: usize, constraints: &[(usize, Constraint)]) -> Vec<usize> {
        self.subtasks[k]
            .entities
            .iter()
            .enumerate()
            .filter(|(_, entity)| {
                constraints.iter().all(|&(slot, c)| match c {
                    Constraint::Value(v) => entity[slot] == v,
                    Constraint::DontCare => true,
                })
            })
            .map(|(e, _)| e)
            .collect()
    }

    pub fn match_count(&self, k: usize, constraints: &[(usize, Constraint)]) -> usize {
        self.query_indices(k, constraints).len()
    }
}

/// Name-keyed query over one subtask's database.
///
/// Constraint values are value identifiers or [`DONTCARE`]; the result lists
/// matching entities as slot-name → value-identifier maps, in database order.
pub fn query(
    ontology: &Ontology,
    db: &EntityDatabase,
    subtask: &str,
    constraints: &[(String, String)],
) -> Result<Vec<Vec<(String, String)>>> {
    let k = ontology
        .subtask_index(subtask)
        .ok_or_else(|| Error::UnknownSubtask(subtask.to_string()))?;
    let spec = &ontology.subtasks[k];
    let mut resolved = Vec::with_capacity(constraints.len());
    for (slot_name, value) in constraints {
        let j = spec
            .slot_index(slot_name)
            .filter(|&j| spec.slots[j].informable)
            .ok_or_else(|| Error::UnknownSlot {
                subtask: subtask.to_string(),
                slot: slot_name.clone(),
            })?;
        let c = if value == DONTCARE {
            Constraint::DontCare
        } else {
            let v = spec.slots[j]
                .values
                .iter()
                .position(|v| v == value)
                .ok_or_else(|| Error::UnknownSlot {
                    subtask: subtask.to_string(),
                    slot: format!("{slot_name}={value}"),
                })?;
            Constraint::Value(v)
        };
        resolved.push((j, c));
    }
    let rows = db.query_indices(k, &resolved);
    Ok(rows
        .into_iter()
        .map(|e| {
            spec.slots
                .iter()
                .enumerate()
                .map(|(j, slot)| {
                    (
                        slot.name.clone(),
                        slot.values[db.subtasks[k].entities[e][j]].clone(),
                    )
                })
                .collect()
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Composite statistics
// ---------------------------------------------------------------------------

/// Headline numbers of a composite task: total informable slots, total
/// requestable slots, and the summed value inventories of all slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CompositeStats {
    pub constraints: usize,
    pub requests: usize,
    pub values: usize,
}

/// Note printed alongside stats: the "values" column counts value
/// inventories, not database cells.
pub const VALUES_COUNTING_NOTE: &str =
    "values = summed slot value inventories (distinct values per slot), not database cells";

pub fn composite_stats(ontology: &Ontology) -> CompositeStats {
    let mut stats = CompositeStats {
        constraints: 0,
        requests: 0,
        values: 0,
    };
    for sub in &ontology.subtasks {
        for slot in &sub.slots {
            if slot.informable {
                stats.constraints += 1;
            }
            if slot.requestable {
                stats.requests += 1;
            }
            stats.values += slot.values.len();
        }
    }
    stats
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

fn slot(name: &str, informable: bool, requestable: bool, n: usize) -> SlotSpec {
    SlotSpec::with_value_count(name, informable, requestable, n)
}

/// Full-scale restaurant-search subtask (3 informable / 9 requestable slots,
/// 268 inventory values, 110 entities).
pub fn preset_cr() -> SubtaskSpec {
    SubtaskSpec {
        name: "CR".into(),
        entity_count: 110,
        slots: vec![
            slot("food", true, true, 91),
            slot("area", true, true, 5),
            slot("pricerange", true, true, 3),
            slot("name", false, true, 110),
            slot("addr", false, true, 30),
            slot("phone", false, true, 15),
            slot("postcode", false, true, 10),
            slot("signature", false, true, 2),
            slot("description", false, true, 2),
        ],
    }
}

/// Full-scale second restaurant-search subtask (6/11 slots, 636 values).
pub fn preset_sfr() -> SubtaskSpec {
    SubtaskSpec {
        name: "SFR".into(),
        entity_count: 271,
        slots: vec![
            slot("food", true, true, 40),
            slot("area", true, true, 155),
            slot("near", true, true, 39),
            slot("pricerange", true, true, 4),
            slot("goodformeal", true, true, 4),
            slot("allowedforkids", true, true, 2),
            slot("name", false, true, 271),
            slot("addr", false, true, 85),
            slot("phone", false, true, 20),
            slot("postcode", false, true, 14),
            slot("price", false, true, 2),
        ],
    }
}

/// Full-scale laptop-shopping subtask (11/21 slots, 257 values).
pub fn preset_lap() -> SubtaskSpec {
    SubtaskSpec {
        name: "LAP".into(),
        entity_count: 123,
        slots: vec![
            slot("family", true, true, 3),
            slot("purpose", true, true, 3),
            slot("pricerange", true, true, 3),
            slot("weightrange", true, true, 3),
            slot("batteryrating", true, true, 3),
            slot("driverange", true, true, 3),
            slot("dimension", true, true, 3),
            slot("isforbusiness", true, true, 2),
            slot("processorclass", true, true, 8),
            slot("sysmemory", true, true, 7),
            slot("warranty", true, true, 2),
            slot("name", false, true, 123),
            slot("price", false, true, 19),
            slot("drive", false, true, 8),
            slot("battery", false, true, 8),
            slot("weight", false, true, 8),
            slot("display", false, true, 8),
            slot("graphadaptor", false, true, 10),
            slot("design", false, true, 11),
            slot("processor", false, true, 14),
            slot("utility", false, true, 8),
        ],
    }
}

/// Desk-scale restaurant subtask: 3 informable slots (7/3/3 values).
pub fn preset_toy_cr() -> SubtaskSpec {
    SubtaskSpec {
        name: "toyCR".into(),
        entity_count: 110,
        slots: vec![
            slot("food", true, true, 7),
            slot("area", true, true, 3),
            slot("pricerange", true, true, 3),
            slot("name", false, true, 110),
            slot("phone", false, true, 12),
        ],
    }
}

/// Desk-scale second restaurant subtask: 3 informable slots (5/4/3 values).
pub fn preset_toy_sfr() -> SubtaskSpec {
    SubtaskSpec {
        name: "toySFR".into(),
        entity_count: 60,
        slots: vec![
            slot("food", true, true, 5),
            slot("area", true, true, 4),
            slot("goodformeal", true, true, 3),
            slot("name", false, true, 60),
            slot("addr", false, true, 10),
        ],
    }
}

/// Desk-scale laptop subtask: 4 informable slots (3/3/4/5 values).
pub fn preset_toy_lap() -> SubtaskSpec {
    SubtaskSpec {
        name: "toyLAP".into(),
        entity_count: 40,
        slots: vec![
            slot("purpose", true, true, 3),
            slot("pricerange", true, true, 3),
            slot("weightrange", true, true, 4),
            slot("processorclass", true, true, 5),
            slot("name", false, true, 40),
            slot("price", false, true, 8),
        ],
    }
}

fn preset_subtask(name: &str) -> Option<SubtaskSpec> {
    match name {
        "CR" => Some(preset_cr()),
        "SFR" => Some(preset_sfr()),
        "LAP" => Some(preset_lap()),
        "toyCR" => Some(preset_toy_cr()),
        "toySFR" => Some(preset_toy_sfr()),
        "toyLAP" => Some(preset_toy_lap()),
        _ => None,
    }
}

/// Look up a built-in ontology by name, e.g. "CR+SFR" or "toyCR+toyLAP".
pub fn preset(name: &str) -> Result<Ontology> {
    let subtasks = name
        .split('+')
        .map(|part| {
            preset_subtask(part.trim())
                .ok_or_else(|| Error::Config(format!("unknown preset subtask '{part}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    if subtasks.is_empty() {
        return Err(Error::Config("empty preset name".into()));
    }
    Ok(Ontology::new(subtasks))
}

/// Names of the three full-scale composite presets.
pub const FULL_PRESETS: [&str; 3] = ["CR+SFR", "CR+LAP", "SFR+LAP"];

// ---------------------------------------------------------------------------
// Ontology file format (versioned JSON, byte-stable)
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct OntologyFile {
    version: u32,
    subtasks: Vec<SubtaskSpec>,
}

/// Serialize to the versioned JSON document. Keys are sorted and lines end
/// with LF, so equal ontologies produce identical bytes.
pub fn ontology_to_json(ontology: &Ontology) -> Result<String> {
    let file = OntologyFile {
        version: ONTOLOGY_FORMAT_VERSION,
        subtasks: ontology.subtasks.clone(),
    };
    // Round-trip through Value: serde_json's map is a BTreeMap, which sorts keys.
    let value = serde_json::to_value(&file)?;
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}

pub fn ontology_from_json(text: &str) -> Result<Ontology> {
    let file: OntologyFile = serde_json::from_str(text)?;
    if file.version != ONTOLOGY_FORMAT_VERSION {
        return Err(Error::Config(format!(
            "unsupported ontology format version {}",
            file.version
        )));
    }
    Ok(Ontology::new(file.subtasks))
}

pub fn write_ontology(path: &std::path::Path, ontology: &Ontology) -> Result<()> {
    std::fs::write(path, ontology_to_json(ontology)?)?;
    Ok(())
}

pub fn read_ontology(path: &std::path::Path) -> Result<Ontology> {
    ontology_from_json(&std::fs::read_to_string(path)?)
}

/// Stable identity of an ontology (used by checkpoints).
pub fn ontology_fingerprint(ontology: &Ontology) -> u64 {
    crate::rng::fingerprint(
        ontology_to_json(ontology)
            .expect("ontology serializes")
            .as_bytes(),
    )
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_composites_are_valid() {
        for name in ["toyCR+toySFR", "toyCR+toyLAP", "CR+SFR", "CR+LAP", "SFR+LAP"] {
            let report = validate_ontology(&preset(name).unwrap());
            assert!(report.ok(), "{name}: {:?}", report.violations);
        }
    }

    #[test]
    fn zero_informable_subtask_is_flagged() {
        let ontology = Ontology::new(vec![SubtaskSpec {
            name: "bad".into(),
            entity_count: 4,
            slots: vec![slot("name", false, true, 4)],
        }]);
        let report = validate_ontology(&ontology);
        assert!(report
            .violations
            .iter()
            .any(|v| v.message.contains("no informable slot")));
    }

    #[test]
    fn duplicate_slot_name_is_flagged() {
        let ontology = Ontology::new(vec![SubtaskSpec {
            name: "bad".into(),
            entity_count: 4,
            slots: vec![slot("area", true, true, 3), slot("area", true, true, 3)],
        }]);
        let report = validate_ontology(&ontology);
        assert!(report
            .violations
            .iter()
            .any(|v| v.message.contains("duplicate slot 'area'")));
    }

    #[test]
    fn database_generation_is_deterministic() {
        let spec = preset_toy_cr();
        assert_eq!(
            generate_database(&spec, 7).unwrap(),
            generate_database(&spec, 7).unwrap()
        );
    }

    #[test]
    fn database_seeds_differ() {
        // Derived check: run the generator with both seeds and compare.
        let spec = preset_toy_cr();
        let a = generate_database(&spec, 7).unwrap();
        let b = generate_database(&spec, 8).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn every_informable_value_is_reachable() {
        let spec = preset_toy_cr();
        assert_eq!(spec.entity_count, 110);
        let db = generate_database(&spec, 42).unwrap();
        for (j, s) in spec.informable_slots() {
            for v in 0..s.values.len() {
                assert!(
                    db.entities.iter().any(|e| e[j] == v),
                    "value {v} of slot {} unreachable",
                    s.name
                );
            }
        }
    }

    #[test]
    fn coverage_error_when_entity_count_too_small() {
        let mut spec = preset_toy_cr();
        spec.entity_count = 5; // food has 7 values
        match generate_database(&spec, 1) {
            Err(Error::UnsatisfiableCoverage { slot, .. }) => assert_eq!(slot, "food"),
            other => panic!("expected coverage error, got {other:?}"),
        }
    }

    #[test]
    fn query_matches_brute_force_scan() {
        let ontology = preset("toyCR").unwrap();
        let db = generate_databases(&ontology, 7).unwrap();
        let constraints = vec![
            ("food".to_string(), "v3".to_string()),
            ("area".to_string(), "v1".to_string()),
        ];
        let got = query(&ontology, &db, "toyCR", &constraints).unwrap();

        // Independent oracle: scan the raw entity table by hand.
        let spec = &ontology.subtasks[0];
        let food = spec.slot_index("food").unwrap();
        let area = spec.slot_index("area").unwrap();
        let expected: Vec<usize> = db.subtasks[0]
            .entities
            .iter()
            .enumerate()
            .filter(|(_, e)| e[food] == 3 && e[area] == 1)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(got.len(), expected.len());
        for (row, &e) in got.iter().zip(&expected) {
            let name_j = spec.slot_index("name").unwrap();
            let name_val = &spec.slots[name_j].values[db.subtasks[0].entities[e][name_j]];
            assert!(row.contains(&("name".to_string(), name_val.clone())));
        }
    }

    #[test]
    fn empty_and_dontcare_constraints_match_everything() {
        let ontology = preset("toyCR").unwrap();
        let db = generate_databases(&ontology, 7).unwrap();
        let all = query(&ontology, &db, "toyCR", &[]).unwrap();
        assert_eq!(all.len(), 110);
        let dc = query(
            &ontology,
            &db,
            "toyCR",
            &[("area".to_string(), DONTCARE.to_string())],
        )
        .unwrap();
        assert_eq!(dc.len(), 110);
    }

    #[test]
    fn unknown_slot_is_an_error() {
        let ontology = preset("toyCR").unwrap();
        let db = generate_databases(&ontology, 7).unwrap();
        let err = query(
            &ontology,
            &db,
            "toyCR",
            &[("nosuch".to_string(), "v0".to_string())],
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnknownSlot { .. }));
    }

    #[test]
    fn table_sized_stats() {
        let expect = [
            ("CR+SFR", (9, 20, 904)),
            ("CR+LAP", (14, 30, 525)),
            ("SFR+LAP", (17, 32, 893)),
        ];
        for (name, (c, r, v)) in expect {
            let stats = composite_stats(&preset(name).unwrap());
            assert_eq!((stats.constraints, stats.requests, stats.values), (c, r, v), "{name}");
        }
    }

    #[test]
    fn per_subtask_value_inventories_solve_the_composite_totals() {
        // Derived: the unique per-domain splits consistent with all three
        // composite rows, verified by summation.
        let cr = composite_stats(&preset("CR").unwrap()).values;
        let sfr = composite_stats(&preset("SFR").unwrap()).values;
        let lap = composite_stats(&preset("LAP").unwrap()).values;
        assert_eq!((cr, sfr, lap), (268, 636, 257));
        assert_eq!(cr + sfr, 904);
        assert_eq!(cr + lap, 525);
        assert_eq!(sfr + lap, 893);
    }

    #[test]
    fn stats_are_additive_over_composition() {
        let a = preset("toyCR").unwrap();
        let b = preset("toyLAP").unwrap();
        let sa = composite_stats(&a);
        let sb = composite_stats(&b);
        let sab = composite_stats(&Ontology::compose(a, b));
        assert_eq!(sab.constraints, sa.constraints + sb.constraints);
        assert_eq!(sab.requests, sa.requests + sb.requests);
        assert_eq!(sab.values, sa.values + sb.values);
    }

    #[test]
    fn json_round_trip_is_byte_stable() {
        let ontology = preset("toyCR+toySFR").unwrap();
        let text = ontology_to_json(&ontology).unwrap();
        let back = ontology_from_json(&text).unwrap();
        assert_eq!(ontology_to_json(&back).unwrap(), text);
        assert!(!text.contains('\r'));
    }

    proptest::proptest! {
        /// Extending a constraint set can only narrow the result set.
        #[test]
        fn query_narrowing_is_monotone(food in 0usize..7, area in 0usize..3, seed in 0u64..50) {
            let ontology = preset("toyCR").unwrap();
            let db = generate_databases(&ontology, seed).unwrap();
            let base = db.query_indices(0, &[(0, Constraint::Value(food))]);
            let narrowed = db.query_indices(0, &[(0, Constraint::Value(food)), (1, Constraint::Value(area))]);
            proptest::prop_assert!(narrowed.iter().all(|e| base.contains(e)));
        }
    }
}
