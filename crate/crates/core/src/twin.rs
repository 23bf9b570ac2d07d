//! Parametric digital twin of a building: typed entities, relationships
//! between them, and bindings from points to time series.
//!
//! The document is a plain value. Reads are freely shareable; every mutating
//! operation validates its preconditions before touching state, so a failed
//! call leaves the document unchanged. Persistence is a single JSON document
//! with top-level `schema_version`, `entities`, `relationships`, `bindings`.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// Kind of a twin entity. Only `Point` entities produce time series data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntityKind {
    Location,
    Equipment,
    Resource,
    Point,
}

/// Subtype carried by `Point` entities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointSubtype {
    Sensor,
    Setpoint,
    Status,
    VirtualPoint,
}

/// Attribute values are flat: strings or numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Text(String),
    Number(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub name: String,
    pub kind: EntityKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub subtype: Option<PointSubtype>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub unit: Option<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub attributes: BTreeMap<String, AttrValue>,
}

impl Entity {
    pub fn new(id: impl Into<String>, name: impl Into<String>, kind: EntityKind) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            kind,
            subtype: None,
            unit: None,
            attributes: BTreeMap::new(),
        }
    }

    pub fn point(id: impl Into<String>, name: impl Into<String>, subtype: PointSubtype) -> Self {
        let mut e = Self::new(id, name, EntityKind::Point);
        e.subtype = Some(subtype);
        e
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = Some(unit.into());
        self
    }
}

/// Fixed predicate vocabulary. Unknown predicates are rejected at parse time
/// to surface schema drift early.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Predicate {
    #[serde(rename = "hasLocation")]
    HasLocation,
    #[serde(rename = "isPartOf")]
    IsPartOf,
    #[serde(rename = "hasPoint")]
    HasPoint,
    #[serde(rename = "feeds")]
    Feeds,
    #[serde(rename = "measures")]
    Measures,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relationship {
    pub subject: String,
    pub predicate: Predicate,
    pub object: String,
}

impl Relationship {
    pub fn new(
        subject: impl Into<String>,
        predicate: Predicate,
        object: impl Into<String>,
    ) -> Self {
        Self {
            subject: subject.into(),
            predicate,
            object: object.into(),
        }
    }

    fn key(&self) -> (String, Predicate, String) {
        (self.subject.clone(), self.predicate, self.object.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesBinding {
    pub point_id: String,
    pub series_id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub latest_value: Option<LatestValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatestValue {
    pub timestamp: i64,
    pub value: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum TwinError {
    #[error("duplicate entity id `{0}`")]
    DuplicateId(String),
    #[error("entity `{0}` is not a Point but carries a unit")]
    UnitOnNonPoint(String),
    #[error("entity `{0}` is not a Point but carries a subtype")]
    SubtypeOnNonPoint(String),
    #[error("Point entity `{0}` is missing its subtype")]
    MissingSubtype(String),
    #[error("unknown entity id `{0}`")]
    UnknownEntity(String),
    #[error("predicate `{predicate:?}` does not allow object `{object}` of kind {kind:?}")]
    PredicateKindMismatch {
        predicate: Predicate,
        object: String,
        kind: EntityKind,
    },
    #[error("duplicate triple ({0}, {1:?}, {2})")]
    DuplicateTriple(String, Predicate, String),
    #[error("entity `{0}` is not a Point")]
    NotAPoint(String),
    #[error("point `{0}` is already bound")]
    AlreadyBound(String),
    #[error("point `{0}` has no series binding")]
    Unbound(String),
    #[error("timestamp {new} precedes latest {latest} on point `{point_id}`")]
    NonMonotonicTimestamp {
        point_id: String,
        latest: i64,
        new: i64,
    },
    #[error("parse error: {0}")]
    ParseError(String),
    #[error("integrity error on `{id}`: {reason}")]
    IntegrityError { id: String, reason: String },
}

/// The twin document. Entities, relationships, and bindings are kept sorted
/// by id so queries and serialization are deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TwinDocument {
    pub schema_version: u32,
    pub entities: Vec<Entity>,
    pub relationships: Vec<Relationship>,
    pub bindings: Vec<SeriesBinding>,
}

/// Point filter for [`TwinDocument::query_points`]. Empty filter matches all
/// points.
#[derive(Debug, Clone, Default)]
pub struct PointFilter {
    pub subtype: Option<PointSubtype>,
    pub location_id: Option<String>,
    pub equipment_id: Option<String>,
}

impl TwinDocument {
    pub fn new() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            entities: Vec::new(),
            relationships: Vec::new(),
            bindings: Vec::new(),
        }
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities
            .binary_search_by(|e| e.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.entities[i])
    }

    fn validate_entity(entity: &Entity) -> Result<(), TwinError> {
        if entity.kind != EntityKind::Point {
            if entity.unit.is_some() {
                return Err(TwinError::UnitOnNonPoint(entity.id.clone()));
            }
            if entity.subtype.is_some() {
                return Err(TwinError::SubtypeOnNonPoint(entity.id.clone()));
            }
        } else if entity.subtype.is_none() {
            return Err(TwinError::MissingSubtype(entity.id.clone()));
        }
        Ok(())
    }

    pub fn add_entity(&mut self, entity: Entity) -> Result<(), TwinError> {
        Self::validate_entity(&entity)?;
        match self
            .entities
            .binary_search_by(|e| e.id.as_str().cmp(&entity.id))
        {
            Ok(_) => Err(TwinError::DuplicateId(entity.id)),
            Err(pos) => {
                self.entities.insert(pos, entity);
                Ok(())
            }
        }
    }

    fn check_predicate_object(&self, rel: &Relationship) -> Result<(), TwinError> {
        let object = self
            .entity(&rel.object)
            .ok_or_else(|| TwinError::UnknownEntity(rel.object.clone()))?;
        let required = match rel.predicate {
            Predicate::HasPoint => Some(EntityKind::Point),
            Predicate::HasLocation => Some(EntityKind::Location),
            _ => None,
        };
        if let Some(kind) = required {
            if object.kind != kind {
                return Err(TwinError::PredicateKindMismatch {
                    predicate: rel.predicate,
                    object: rel.object.clone(),
                    kind: object.kind,
                });
            }
        }
        Ok(())
    }

    pub fn add_relationship(&mut self, rel: Relationship) -> Result<(), TwinError> {
        if self.entity(&rel.subject).is_none() {
            return Err(TwinError::UnknownEntity(rel.subject));
        }
        self.check_predicate_object(&rel)?;
        match self
            .relationships
            .binary_search_by_key(&rel.key(), Relationship::key)
        {
            Ok(_) => Err(TwinError::DuplicateTriple(
                rel.subject,
                rel.predicate,
                rel.object,
            )),
            Err(pos) => {
                self.relationships.insert(pos, rel);
                Ok(())
            }
        }
    }

    /// Points matching every given filter clause, sorted by id. A point is on
    /// a location either directly via `hasLocation` or through equipment that
    /// `hasPoint`s it.
    pub fn query_points(&self, filter: &PointFilter) -> Result<Vec<&Entity>, TwinError> {
        for id in [&filter.location_id, &filter.equipment_id]
            .into_iter()
            .flatten()
        {
            if self.entity(id).is_none() {
                return Err(TwinError::UnknownEntity(id.clone()));
            }
        }
        let mut out = Vec::new();
        for e in &self.entities {
            if e.kind != EntityKind::Point {
                continue;
            }
            if let Some(sub) = filter.subtype {
                if e.subtype != Some(sub) {
                    continue;
                }
            }
            if let Some(eq) = &filter.equipment_id {
                if !self.has_triple(eq, Predicate::HasPoint, &e.id) {
                    continue;
                }
            }
            if let Some(loc) = &filter.location_id {
                if !self.point_on_location(&e.id, loc) {
                    continue;
                }
            }
            out.push(e);
        }
        Ok(out)
    }

    fn has_triple(&self, subject: &str, predicate: Predicate, object: &str) -> bool {
        self.relationships
            .binary_search_by_key(
                &(subject.to_owned(), predicate, object.to_owned()),
                Relationship::key,
            )
            .is_ok()
    }

    fn point_on_location(&self, point_id: &str, location_id: &str) -> bool {
        if self.has_triple(point_id, Predicate::HasLocation, location_id) {
            return true;
        }
        self.relationships.iter().any(|r| {
            r.predicate == Predicate::HasPoint
                && r.object == point_id
                && self.has_triple(&r.subject, Predicate::HasLocation, location_id)
        })
    }

    fn binding_index(&self, point_id: &str) -> Option<usize> {
        self.bindings
            .binary_search_by(|b| b.point_id.as_str().cmp(point_id))
            .ok()
    }

    pub fn bind_series(
        &mut self,
        point_id: impl Into<String>,
        series_id: impl Into<String>,
    ) -> Result<(), TwinError> {
        let point_id = point_id.into();
        let entity = self
            .entity(&point_id)
            .ok_or_else(|| TwinError::UnknownEntity(point_id.clone()))?;
        if entity.kind != EntityKind::Point {
            return Err(TwinError::NotAPoint(point_id));
        }
        match self
            .bindings
            .binary_search_by(|b| b.point_id.as_str().cmp(&point_id))
        {
            Ok(_) => Err(TwinError::AlreadyBound(point_id)),
            Err(pos) => {
                self.bindings.insert(
                    pos,
                    SeriesBinding {
                        point_id,
                        series_id: series_id.into(),
                        latest_value: None,
                    },
                );
                Ok(())
            }
        }
    }

    pub fn update_point_status(
        &mut self,
        point_id: &str,
        timestamp: i64,
        value: f64,
    ) -> Result<(), TwinError> {
        let idx = self
            .binding_index(point_id)
            .ok_or_else(|| TwinError::Unbound(point_id.to_owned()))?;
        if let Some(latest) = &self.bindings[idx].latest_value {
            if timestamp < latest.timestamp {
                return Err(TwinError::NonMonotonicTimestamp {
                    point_id: point_id.to_owned(),
                    latest: latest.timestamp,
                    new: timestamp,
                });
            }
        }
        self.bindings[idx].latest_value = Some(LatestValue { timestamp, value });
        Ok(())
    }

    /// Full integrity sweep: entity-level invariants, referential integrity of
    /// every relationship and binding, and uniqueness. Returns the first
    /// violation with the offending id.
    pub fn validate(&self) -> Result<(), TwinError> {
        let mut ids = HashSet::new();
        let mut kinds = HashMap::new();
        for e in &self.entities {
            Self::validate_entity(e).map_err(|err| TwinError::IntegrityError {
                id: e.id.clone(),
                reason: err.to_string(),
            })?;
            if !ids.insert(e.id.as_str()) {
                return Err(TwinError::IntegrityError {
                    id: e.id.clone(),
                    reason: "duplicate entity id".into(),
                });
            }
            kinds.insert(e.id.as_str(), e.kind);
        }
        let mut triples = HashSet::new();
        for r in &self.relationships {
            for end in [&r.subject, &r.object] {
                if !ids.contains(end.as_str()) {
                    return Err(TwinError::IntegrityError {
                        id: end.clone(),
                        reason: "relationship references unknown entity".into(),
                    });
                }
            }
            let object_kind = kinds[r.object.as_str()];
            let ok = match r.predicate {
                Predicate::HasPoint => object_kind == EntityKind::Point,
                Predicate::HasLocation => object_kind == EntityKind::Location,
                _ => true,
            };
            if !ok {
                return Err(TwinError::IntegrityError {
                    id: r.object.clone(),
                    reason: format!("object kind {object_kind:?} invalid for {:?}", r.predicate),
                });
            }
            if !triples.insert(r.key()) {
                return Err(TwinError::IntegrityError {
                    id: r.subject.clone(),
                    reason: "duplicate triple".into(),
                });
            }
        }
        let mut bound = HashSet::new();
        for b in &self.bindings {
            match kinds.get(b.point_id.as_str()) {
                None => {
                    return Err(TwinError::IntegrityError {
                        id: b.point_id.clone(),
                        reason: "binding references unknown entity".into(),
                    })
                }
                Some(EntityKind::Point) => {}
                Some(kind) => {
                    return Err(TwinError::IntegrityError {
                        id: b.point_id.clone(),
                        reason: format!("binding on non-point entity of kind {kind:?}"),
                    })
                }
            }
            if !bound.insert(b.point_id.as_str()) {
                return Err(TwinError::IntegrityError {
                    id: b.point_id.clone(),
                    reason: "multiple bindings for one point".into(),
                });
            }
        }
        Ok(())
    }

    /// Serializes to pretty JSON with canonical (sorted) member order.
    pub fn serialize(&self) -> Result<String, TwinError> {
        let mut doc = self.clone();
        doc.sort();
        serde_json::to_string_pretty(&doc).map_err(|e| TwinError::ParseError(e.to_string()))
    }

    /// Parses and validates a document. The loaded document is canonicalized
    /// so that serialize∘deserialize is the identity.
    pub fn deserialize(text: &str) -> Result<Self, TwinError> {
        let mut doc: TwinDocument =
            serde_json::from_str(text).map_err(|e| TwinError::ParseError(e.to_string()))?;
        doc.sort();
        doc.validate()?;
        Ok(doc)
    }

    fn sort(&mut self) {
        self.entities.sort_by(|a, b| a.id.cmp(&b.id));
        self.relationships.sort_by_key(Relationship::key);
        self.bindings.sort_by(|a, b| a.point_id.cmp(&b.point_id));
    }
}

/// Builds the 20-entity toy museum twin used by tests and the CLI demo.
pub fn museum_twin() -> TwinDocument {
    use EntityKind::*;
    use PointSubtype::*;
    let mut doc = TwinDocument::new();
    let entities = vec![
        Entity::new("museum", "City Museum", Location),
        Entity::new("floor1", "Floor 1", Location),
        Entity::new("floor2", "Floor 2", Location),
        Entity::new("basement", "Basement", Location),
        Entity::new("elec_meter", "Main electricity meter", Equipment),
        Entity::new("heat_exchanger", "District heating exchanger", Equipment),
        Entity::new("ahu1", "Air handling unit 1", Equipment),
        Entity::new("boiler", "Backup boiler", Equipment),
        Entity::new("electricity", "Electrical energy", Resource),
        Entity::new("district_heat", "District heating", Resource),
        Entity::point("p_elec_kwh", "Electricity consumption", Sensor).with_unit("kWh"),
        Entity::point("p_heat_kwh", "Heating load", Sensor).with_unit("kWh"),
        Entity::point("p_outdoor_temp", "Outdoor temperature", Sensor).with_unit("degC"),
        Entity::point("p_room_temp_f1", "Room temperature floor 1", Sensor).with_unit("degC"),
        Entity::point("p_room_temp_f2", "Room temperature floor 2", Sensor).with_unit("degC"),
        Entity::point("p_humidity_f1", "Relative humidity floor 1", Sensor).with_unit("pct"),
        Entity::point("p_avg_humidity", "Average floor humidity", VirtualPoint).with_unit("pct"),
        Entity::point("p_ahu1_status", "AHU 1 running status", Status),
        Entity::point("p_heat_setpoint", "Heating supply setpoint", Setpoint).with_unit("degC"),
        Entity::point("p_supply_temp", "Heating supply temperature", Sensor).with_unit("degC"),
    ];
    for e in entities {
        doc.add_entity(e).expect("fixture entity");
    }
    use Predicate::*;
    let rels = vec![
        ("floor1", IsPartOf, "museum"),
        ("floor2", IsPartOf, "museum"),
        ("basement", IsPartOf, "museum"),
        ("elec_meter", HasLocation, "basement"),
        ("heat_exchanger", HasLocation, "basement"),
        ("ahu1", HasLocation, "floor1"),
        ("boiler", HasLocation, "basement"),
        ("elec_meter", Measures, "electricity"),
        ("heat_exchanger", Measures, "district_heat"),
        ("district_heat", Feeds, "heat_exchanger"),
        ("elec_meter", HasPoint, "p_elec_kwh"),
        ("heat_exchanger", HasPoint, "p_heat_kwh"),
        ("heat_exchanger", HasPoint, "p_supply_temp"),
        ("heat_exchanger", HasPoint, "p_heat_setpoint"),
        ("ahu1", HasPoint, "p_ahu1_status"),
        ("p_room_temp_f1", HasLocation, "floor1"),
        ("p_humidity_f1", HasLocation, "floor1"),
        ("p_room_temp_f2", HasLocation, "floor2"),
        ("p_outdoor_temp", HasLocation, "museum"),
        ("p_avg_humidity", HasLocation, "museum"),
    ];
    for (s, p, o) in rels {
        doc.add_relationship(Relationship::new(s, p, o))
            .expect("fixture relationship");
    }
    doc.bind_series("p_elec_kwh", "electricity_kwh")
        .expect("fixture binding");
    doc.bind_series("p_heat_kwh", "heating_kwh")
        .expect("fixture binding");
    doc.bind_series("p_outdoor_temp", "dry_bulb_temp_c")
        .expect("fixture binding");
    doc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn location(id: &str) -> Entity {
        Entity::new(id, id, EntityKind::Location)
    }

    #[test]
    fn add_entity_to_empty_doc() {
        let mut doc = TwinDocument::new();
        doc.add_entity(location("floor1")).unwrap();
        assert_eq!(doc.entities.len(), 1);
    }

    #[test]
    fn add_entity_rejects_duplicate_id() {
        let mut doc = TwinDocument::new();
        doc.add_entity(location("p1")).unwrap();
        let err = doc.add_entity(location("p1")).unwrap_err();
        assert_eq!(err, TwinError::DuplicateId("p1".into()));
        assert_eq!(doc.entities.len(), 1);
    }

    #[test]
    fn add_entity_rejects_unit_on_equipment() {
        let mut doc = TwinDocument::new();
        let e = Entity::new("boiler1", "Boiler", EntityKind::Equipment).with_unit("kWh");
        assert_eq!(
            doc.add_entity(e).unwrap_err(),
            TwinError::UnitOnNonPoint("boiler1".into())
        );
        assert!(doc.entities.is_empty());
    }

    #[test]
    fn add_relationship_stores_triple_once() {
        let mut doc = TwinDocument::new();
        doc.add_entity(location("floor1")).unwrap();
        doc.add_entity(Entity::new("meter1", "Meter", EntityKind::Equipment))
            .unwrap();
        let rel = Relationship::new("meter1", Predicate::HasLocation, "floor1");
        doc.add_relationship(rel.clone()).unwrap();
        assert_eq!(
            doc.add_relationship(rel).unwrap_err(),
            TwinError::DuplicateTriple("meter1".into(), Predicate::HasLocation, "floor1".into())
        );
        assert_eq!(doc.relationships.len(), 1);
    }

    #[test]
    fn add_relationship_checks_object_kind() {
        let mut doc = TwinDocument::new();
        doc.add_entity(Entity::new("meter1", "Meter", EntityKind::Equipment))
            .unwrap();
        doc.add_entity(Entity::new("boiler1", "Boiler", EntityKind::Equipment))
            .unwrap();
        let err = doc
            .add_relationship(Relationship::new(
                "meter1",
                Predicate::HasLocation,
                "boiler1",
            ))
            .unwrap_err();
        assert!(matches!(err, TwinError::PredicateKindMismatch { .. }));
    }

    #[test]
    fn add_relationship_requires_existing_entities() {
        let mut doc = TwinDocument::new();
        doc.add_entity(location("floor1")).unwrap();
        let err = doc
            .add_relationship(Relationship::new("ghost", Predicate::HasLocation, "floor1"))
            .unwrap_err();
        assert_eq!(err, TwinError::UnknownEntity("ghost".into()));
    }

    #[test]
    fn query_points_by_location_on_museum_fixture() {
        // Hand enumeration on the fixture: floor1 points are p_room_temp_f1
        // and p_humidity_f1 (direct hasLocation) plus p_ahu1_status through
        // ahu1 (hasLocation floor1, hasPoint status).
        let doc = museum_twin();
        let filter = PointFilter {
            location_id: Some("floor1".into()),
            ..Default::default()
        };
        let got: Vec<&str> = doc
            .query_points(&filter)
            .unwrap()
            .iter()
            .map(|e| e.id.as_str())
            .collect();
        assert_eq!(got, vec!["p_ahu1_status", "p_humidity_f1", "p_room_temp_f1"]);

        let f2 = PointFilter {
            location_id: Some("floor2".into()),
            subtype: Some(PointSubtype::Sensor),
            ..Default::default()
        };
        let got: Vec<&str> = doc
            .query_points(&f2)
            .unwrap()
            .iter()
            .map(|e| e.id.as_str())
            .collect();
        assert_eq!(got, vec!["p_room_temp_f2"]);
    }

    #[test]
    fn query_points_empty_filter_returns_all_points() {
        let doc = museum_twin();
        let points = doc.query_points(&PointFilter::default()).unwrap();
        assert_eq!(points.len(), 10);
        assert!(points.iter().all(|e| e.kind == EntityKind::Point));
        let mut ids: Vec<_> = points.iter().map(|e| e.id.clone()).collect();
        let sorted = {
            let mut v = ids.clone();
            v.sort();
            v
        };
        ids.sort();
        assert_eq!(ids, sorted);
    }

    #[test]
    fn query_points_no_match_gives_empty_list() {
        let mut doc = TwinDocument::new();
        doc.add_entity(Entity::point("s1", "Sensor", PointSubtype::Sensor))
            .unwrap();
        let filter = PointFilter {
            subtype: Some(PointSubtype::Setpoint),
            ..Default::default()
        };
        assert!(doc.query_points(&filter).unwrap().is_empty());
    }

    #[test]
    fn query_points_unknown_filter_id_errors() {
        let doc = museum_twin();
        let filter = PointFilter {
            location_id: Some("floor9".into()),
            ..Default::default()
        };
        assert_eq!(
            doc.query_points(&filter).unwrap_err(),
            TwinError::UnknownEntity("floor9".into())
        );
    }

    #[test]
    fn bind_series_once() {
        let mut doc = TwinDocument::new();
        doc.add_entity(Entity::point("p1", "Sensor", PointSubtype::Sensor))
            .unwrap();
        doc.bind_series("p1", "s1").unwrap();
        assert!(doc.bindings[0].latest_value.is_none());
        assert_eq!(
            doc.bind_series("p1", "s2").unwrap_err(),
            TwinError::AlreadyBound("p1".into())
        );
    }

    #[test]
    fn bind_series_rejects_non_point() {
        let mut doc = TwinDocument::new();
        doc.add_entity(location("floor1")).unwrap();
        assert_eq!(
            doc.bind_series("floor1", "s1").unwrap_err(),
            TwinError::NotAPoint("floor1".into())
        );
    }

    #[test]
    fn update_point_status_replaces_latest() {
        let mut doc = TwinDocument::new();
        doc.add_entity(Entity::point("p1", "Sensor", PointSubtype::Sensor))
            .unwrap();
        doc.bind_series("p1", "s1").unwrap();
        doc.update_point_status("p1", 100, 3.2).unwrap();
        doc.update_point_status("p1", 101, 3.4).unwrap();
        assert_eq!(
            doc.bindings[0].latest_value,
            Some(LatestValue {
                timestamp: 101,
                value: 3.4
            })
        );
        let err = doc.update_point_status("p1", 100, 9.9).unwrap_err();
        assert!(matches!(err, TwinError::NonMonotonicTimestamp { .. }));
    }

    #[test]
    fn update_point_status_requires_binding() {
        let mut doc = TwinDocument::new();
        doc.add_entity(Entity::point("p1", "Sensor", PointSubtype::Sensor))
            .unwrap();
        assert_eq!(
            doc.update_point_status("p1", 1, 0.0).unwrap_err(),
            TwinError::Unbound("p1".into())
        );
    }

    #[test]
    fn serialize_round_trip_is_identity() {
        let doc = museum_twin();
        let text = doc.serialize().unwrap();
        let back = TwinDocument::deserialize(&text).unwrap();
        assert_eq!(doc, back);
    }

    #[test]
    fn deserialize_rejects_dangling_reference() {
        let mut doc = museum_twin();
        doc.relationships.push(Relationship::new(
            "ghost",
            Predicate::IsPartOf,
            "museum",
        ));
        let text = serde_json::to_string(&doc).unwrap();
        match TwinDocument::deserialize(&text).unwrap_err() {
            TwinError::IntegrityError { id, .. } => assert_eq!(id, "ghost"),
            other => panic!("expected IntegrityError, got {other:?}"),
        }
    }

    #[test]
    fn deserialize_rejects_truncated_text() {
        let text = museum_twin().serialize().unwrap();
        let truncated = &text[..text.len() / 2];
        assert!(matches!(
            TwinDocument::deserialize(truncated).unwrap_err(),
            TwinError::ParseError(_)
        ));
    }

    #[test]
    fn deserialize_rejects_unknown_predicate() {
        let text = r#"{
            "schema_version": 1,
            "entities": [
                {"id": "a", "name": "A", "kind": "Location"},
                {"id": "b", "name": "B", "kind": "Location"}
            ],
            "relationships": [{"subject": "a", "predicate": "adjacentTo", "object": "b"}],
            "bindings": []
        }"#;
        assert!(matches!(
            TwinDocument::deserialize(text).unwrap_err(),
            TwinError::ParseError(_)
        ));
    }

    #[test]
    fn museum_fixture_is_valid_and_has_twenty_entities() {
        let doc = museum_twin();
        doc.validate().unwrap();
        assert_eq!(doc.entities.len(), 20);
        assert_eq!(doc.relationships.len(), 20);
        assert_eq!(doc.bindings.len(), 3);
    }

    #[test]
    fn failed_mutation_leaves_document_unchanged() {
        let doc = museum_twin();
        let mut mutated = doc.clone();
        assert!(mutated
            .add_relationship(Relationship::new(
                "elec_meter",
                Predicate::HasLocation,
                "boiler",
            ))
            .is_err());
        assert!(mutated.bind_series("p_elec_kwh", "other").is_err());
        assert!(mutated.add_entity(location("museum")).is_err());
        assert_eq!(doc, mutated);
    }
}
