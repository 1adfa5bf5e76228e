//! Entities, buildings, floors and scanner placements, with role checks.
//!
//! The whole configuration is one JSON document. Every mutation is applied to
//! a copy under the write lock, persisted (temp file + rename) and only then
//! swapped in, so a failed write leaves both disk and memory unchanged.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use probesense_core::transport::is_valid_scanner_id;

pub type Id = u64;

/// Ordered so that `User < Admin < SuperAdmin`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Admin,
    SuperAdmin,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::User, Role::Admin, Role::SuperAdmin];
}

/// Authenticated identity behind a request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caller {
    pub user_id: String,
    pub role: Role,
}

impl Caller {
    pub fn new(user_id: impl Into<String>, role: Role) -> Self {
        Self {
            user_id: user_id.into(),
            role,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub user_id: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: Id,
    pub name: String,
    pub users: Vec<Member>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Building {
    pub id: Id,
    pub entity_id: Id,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FloorMap {
    pub media_type: String,
    #[serde(with = "b64")]
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Floor {
    pub id: Id,
    pub building_id: Id,
    pub name: String,
    pub max_density: u32,
    pub map: Option<FloorMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScannerPlacement {
    pub scanner_id: String,
    pub floor_id: Id,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfigDoc {
    pub next_id: Id,
    pub entities: BTreeMap<Id, Entity>,
    pub buildings: BTreeMap<Id, Building>,
    pub floors: BTreeMap<Id, Floor>,
    /// Keyed by scanner id, which makes double placement impossible.
    pub placements: BTreeMap<String, ScannerPlacement>,
}

impl ConfigDoc {
    fn fresh_id(&mut self) -> Id {
        self.next_id += 1;
        self.next_id
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{0}")]
    Forbidden(String),
    #[error("{0} not found")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Invalid(String),
    #[error("config storage: {0}")]
    Storage(String),
}

type Result<T> = std::result::Result<T, ConfigError>;

fn forbidden(needed: Role) -> ConfigError {
    ConfigError::Forbidden(format!("requires role {needed:?} or higher"))
}

#[derive(Debug)]
pub struct ConfigService {
    path: Option<PathBuf>,
    doc: RwLock<ConfigDoc>,
}

impl ConfigService {
    /// Volatile store, for tests and demos.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            doc: RwLock::new(ConfigDoc::default()),
        }
    }

    /// Loads `path`, or starts empty when it does not exist yet.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let doc = match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| ConfigError::Storage(format!("{}: {e}", path.display())))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => ConfigDoc::default(),
            Err(e) => return Err(ConfigError::Storage(format!("{}: {e}", path.display()))),
        };
        Ok(Self {
            path: Some(path),
            doc: RwLock::new(doc),
        })
    }

    pub fn snapshot(&self) -> ConfigDoc {
        self.doc.read().unwrap().clone()
    }

    fn read<T>(&self, f: impl FnOnce(&ConfigDoc) -> Result<T>) -> Result<T> {
        f(&self.doc.read().unwrap())
    }

    fn mutate<T>(&self, f: impl FnOnce(&mut ConfigDoc) -> Result<T>) -> Result<T> {
        let mut guard = self.doc.write().unwrap();
        let mut next = guard.clone();
        let out = f(&mut next)?;
        if let Some(path) = &self.path {
            persist(path, &next)?;
        }
        *guard = next;
        Ok(out)
    }

    // entities

    pub fn create_entity(&self, caller: &Caller, name: &str) -> Result<Entity> {
        if caller.role != Role::SuperAdmin {
            return Err(forbidden(Role::SuperAdmin));
        }
        let name = non_empty("name", name)?;
        self.mutate(|doc| {
            let e = Entity {
                id: doc.fresh_id(),
                name,
                users: Vec::new(),
            };
            doc.entities.insert(e.id, e.clone());
            Ok(e)
        })
    }

    pub fn list_entities(&self, caller: &Caller) -> Vec<Entity> {
        let doc = self.doc.read().unwrap();
        doc.entities
            .values()
            .filter(|e| entity_role(e, caller).is_some())
            .cloned()
            .collect()
    }

    pub fn entity(&self, caller: &Caller, id: Id) -> Result<Entity> {
        self.read(|doc| {
            let e = find_entity(doc, id)?;
            require(e, caller, Role::User)?;
            Ok(e.clone())
        })
    }

    pub fn delete_entity(&self, caller: &Caller, id: Id) -> Result<()> {
        self.mutate(|doc| {
            find_entity(doc, id)?;
            if caller.role != Role::SuperAdmin {
                return Err(forbidden(Role::SuperAdmin));
            }
            doc.entities.remove(&id);
            let buildings: Vec<Id> = doc
                .buildings
                .values()
                .filter(|b| b.entity_id == id)
                .map(|b| b.id)
                .collect();
            for b in buildings {
                drop_building(doc, b);
            }
            Ok(())
        })
    }

    /// Admins may grant roles up to their own.
    pub fn add_user(
        &self,
        caller: &Caller,
        entity_id: Id,
        user_id: &str,
        role: Role,
    ) -> Result<Entity> {
        self.mutate(|doc| {
            let e = find_entity(doc, entity_id)?;
            let own = require(e, caller, Role::Admin)?;
            if role > own {
                return Err(ConfigError::Forbidden(format!(
                    "cannot grant {role:?} above own role {own:?}"
                )));
            }
            let user_id = non_empty("user_id", user_id)?;
            let e = doc.entities.get_mut(&entity_id).expect("checked above");
            if e.users.iter().any(|m| m.user_id == user_id) {
                return Err(ConfigError::Conflict(format!(
                    "user {user_id:?} is already a member"
                )));
            }
            e.users.push(Member { user_id, role });
            Ok(e.clone())
        })
    }

    pub fn remove_user(&self, caller: &Caller, entity_id: Id, user_id: &str) -> Result<Entity> {
        self.mutate(|doc| {
            let e = find_entity(doc, entity_id)?;
            let own = require(e, caller, Role::Admin)?;
            let Some(pos) = e.users.iter().position(|m| m.user_id == user_id) else {
                return Err(ConfigError::NotFound(format!("member {user_id:?}")));
            };
            if e.users[pos].role > own {
                return Err(ConfigError::Forbidden(
                    "cannot remove a member with a higher role".into(),
                ));
            }
            let e = doc.entities.get_mut(&entity_id).expect("checked above");
            e.users.remove(pos);
            Ok(e.clone())
        })
    }

    // buildings

    pub fn create_building(&self, caller: &Caller, entity_id: Id, name: &str) -> Result<Building> {
        self.mutate(|doc| {
            require(find_entity(doc, entity_id)?, caller, Role::Admin)?;
            let name = non_empty("name", name)?;
            let b = Building {
                id: doc.fresh_id(),
                entity_id,
                name,
            };
            doc.buildings.insert(b.id, b.clone());
            Ok(b)
        })
    }

    pub fn building(&self, caller: &Caller, id: Id) -> Result<Building> {
        self.read(|doc| {
            let (b, e) = find_building(doc, id)?;
            require(e, caller, Role::User)?;
            Ok(b.clone())
        })
    }

    pub fn list_buildings(&self, caller: &Caller) -> Vec<Building> {
        let doc = self.doc.read().unwrap();
        doc.buildings
            .values()
            .filter(|b| {
                doc.entities
                    .get(&b.entity_id)
                    .is_some_and(|e| entity_role(e, caller).is_some())
            })
            .cloned()
            .collect()
    }

    pub fn delete_building(&self, caller: &Caller, id: Id) -> Result<()> {
        self.mutate(|doc| {
            let (_, e) = find_building(doc, id)?;
            require(e, caller, Role::Admin)?;
            drop_building(doc, id);
            Ok(())
        })
    }

    pub fn building_floors(&self, caller: &Caller, id: Id) -> Result<Vec<Floor>> {
        self.read(|doc| {
            let (_, e) = find_building(doc, id)?;
            require(e, caller, Role::User)?;
            Ok(doc
                .floors
                .values()
                .filter(|f| f.building_id == id)
                .cloned()
                .collect())
        })
    }

    /// Every scanner placed on any floor of the building.
    pub fn building_scanners(&self, caller: &Caller, id: Id) -> Result<Vec<String>> {
        self.read(|doc| {
            let (_, e) = find_building(doc, id)?;
            require(e, caller, Role::User)?;
            let floors: BTreeSet<Id> = doc
                .floors
                .values()
                .filter(|f| f.building_id == id)
                .map(|f| f.id)
                .collect();
            Ok(doc
                .placements
                .values()
                .filter(|p| floors.contains(&p.floor_id))
                .map(|p| p.scanner_id.clone())
                .collect())
        })
    }

    // floors

    pub fn create_floor(
        &self,
        caller: &Caller,
        building_id: Id,
        name: &str,
        max_density: u32,
        map: Option<FloorMap>,
    ) -> Result<Floor> {
        self.mutate(|doc| {
            let (_, e) = find_building(doc, building_id)?;
            require(e, caller, Role::Admin)?;
            let name = non_empty("name", name)?;
            check_max_density(max_density)?;
            if let Some(m) = &map {
                check_media_type(&m.media_type)?;
            }
            let f = Floor {
                id: doc.fresh_id(),
                building_id,
                name,
                max_density,
                map,
            };
            doc.floors.insert(f.id, f.clone());
            Ok(f)
        })
    }

    pub fn floor(&self, caller: &Caller, id: Id) -> Result<Floor> {
        self.read(|doc| {
            let (f, e) = find_floor(doc, id)?;
            require(e, caller, Role::User)?;
            Ok(f.clone())
        })
    }

    pub fn delete_floor(&self, caller: &Caller, id: Id) -> Result<()> {
        self.mutate(|doc| {
            let (_, e) = find_floor(doc, id)?;
            require(e, caller, Role::Admin)?;
            drop_floor(doc, id);
            Ok(())
        })
    }

    pub fn set_max_density(&self, caller: &Caller, id: Id, max_density: u32) -> Result<Floor> {
        self.mutate(|doc| {
            let (_, e) = find_floor(doc, id)?;
            require(e, caller, Role::Admin)?;
            check_max_density(max_density)?;
            let f = doc.floors.get_mut(&id).expect("checked above");
            f.max_density = max_density;
            Ok(f.clone())
        })
    }

    pub fn set_floor_map(&self, caller: &Caller, id: Id, map: FloorMap) -> Result<Floor> {
        self.mutate(|doc| {
            let (_, e) = find_floor(doc, id)?;
            require(e, caller, Role::Admin)?;
            check_media_type(&map.media_type)?;
            let f = doc.floors.get_mut(&id).expect("checked above");
            f.map = Some(map);
            Ok(f.clone())
        })
    }

    // placements

    pub fn place_scanner(
        &self,
        caller: &Caller,
        floor_id: Id,
        scanner_id: &str,
        x: f64,
        y: f64,
    ) -> Result<ScannerPlacement> {
        self.mutate(|doc| {
            let (_, e) = find_floor(doc, floor_id)?;
            require(e, caller, Role::Admin)?;
            check_scanner_id(scanner_id)?;
            check_position(x, y)?;
            if let Some(p) = doc.placements.get(scanner_id) {
                return Err(ConfigError::Conflict(format!(
                    "scanner {scanner_id:?} is already placed on floor {}",
                    p.floor_id
                )));
            }
            let p = ScannerPlacement {
                scanner_id: scanner_id.to_string(),
                floor_id,
                x,
                y,
            };
            doc.placements.insert(p.scanner_id.clone(), p.clone());
            Ok(p)
        })
    }

    pub fn move_scanner(
        &self,
        caller: &Caller,
        floor_id: Id,
        scanner_id: &str,
        x: f64,
        y: f64,
    ) -> Result<ScannerPlacement> {
        self.mutate(|doc| {
            let (_, e) = find_floor(doc, floor_id)?;
            require(e, caller, Role::Admin)?;
            check_position(x, y)?;
            let p = placement_on(doc, floor_id, scanner_id)?;
            p.x = x;
            p.y = y;
            Ok(p.clone())
        })
    }

    pub fn remove_scanner(&self, caller: &Caller, floor_id: Id, scanner_id: &str) -> Result<()> {
        self.mutate(|doc| {
            let (_, e) = find_floor(doc, floor_id)?;
            require(e, caller, Role::Admin)?;
            placement_on(doc, floor_id, scanner_id)?;
            doc.placements.remove(scanner_id);
            Ok(())
        })
    }

    pub fn floor_scanners(&self, caller: &Caller, floor_id: Id) -> Result<Vec<ScannerPlacement>> {
        self.read(|doc| {
            let (_, e) = find_floor(doc, floor_id)?;
            require(e, caller, Role::User)?;
            Ok(placements_of(doc, floor_id))
        })
    }

    /// Scanner set and limit of a floor without an access check; used by the
    /// realtime relay after the subscription itself was authorized.
    pub fn floor_watch(&self, floor_id: Id) -> Option<(BTreeSet<String>, u32)> {
        let doc = self.doc.read().unwrap();
        let f = doc.floors.get(&floor_id)?;
        let scanners = placements_of(&doc, floor_id)
            .into_iter()
            .map(|p| p.scanner_id)
            .collect();
        Some((scanners, f.max_density))
    }
}

fn placements_of(doc: &ConfigDoc, floor_id: Id) -> Vec<ScannerPlacement> {
    doc.placements
        .values()
        .filter(|p| p.floor_id == floor_id)
        .cloned()
        .collect()
}

fn placement_on<'a>(
    doc: &'a mut ConfigDoc,
    floor_id: Id,
    scanner_id: &str,
) -> Result<&'a mut ScannerPlacement> {
    match doc.placements.get_mut(scanner_id) {
        Some(p) if p.floor_id == floor_id => Ok(p),
        _ => Err(ConfigError::NotFound(format!(
            "scanner {scanner_id:?} on floor {floor_id}"
        ))),
    }
}

/// Role the caller holds within the entity: the member role capped by the
/// token's role. Super admins hold every entity.
fn entity_role(e: &Entity, caller: &Caller) -> Option<Role> {
    if caller.role == Role::SuperAdmin {
        return Some(Role::SuperAdmin);
    }
    e.users
        .iter()
        .find(|m| m.user_id == caller.user_id)
        .map(|m| m.role.min(caller.role))
}

fn require(e: &Entity, caller: &Caller, needed: Role) -> Result<Role> {
    match entity_role(e, caller) {
        Some(r) if r >= needed => Ok(r),
        Some(_) => Err(forbidden(needed)),
        None => Err(ConfigError::Forbidden(format!(
            "not a member of entity {}",
            e.id
        ))),
    }
}

fn find_entity(doc: &ConfigDoc, id: Id) -> Result<&Entity> {
    doc.entities
        .get(&id)
        .ok_or_else(|| ConfigError::NotFound(format!("entity {id}")))
}

fn find_building(doc: &ConfigDoc, id: Id) -> Result<(&Building, &Entity)> {
    let b = doc
        .buildings
        .get(&id)
        .ok_or_else(|| ConfigError::NotFound(format!("building {id}")))?;
    Ok((b, find_entity(doc, b.entity_id)?))
}

fn find_floor(doc: &ConfigDoc, id: Id) -> Result<(&Floor, &Entity)> {
    let f = doc
        .floors
        .get(&id)
        .ok_or_else(|| ConfigError::NotFound(format!("floor {id}")))?;
    let (_, e) = find_building(doc, f.building_id)?;
    Ok((f, e))
}

fn drop_building(doc: &mut ConfigDoc, id: Id) {
    doc.buildings.remove(&id);
    let floors: Vec<Id> = doc
        .floors
        .values()
        .filter(|f| f.building_id == id)
        .map(|f| f.id)
        .collect();
    for f in floors {
        drop_floor(doc, f);
    }
}

fn drop_floor(doc: &mut ConfigDoc, id: Id) {
    doc.floors.remove(&id);
    doc.placements.retain(|_, p| p.floor_id != id);
}

fn non_empty(field: &str, value: &str) -> Result<String> {
    let v = value.trim();
    if v.is_empty() {
        return Err(ConfigError::Invalid(format!("{field} must not be empty")));
    }
    Ok(v.to_string())
}

fn check_max_density(v: u32) -> Result<()> {
    if v == 0 {
        return Err(ConfigError::Invalid("max_density must be positive".into()));
    }
    Ok(())
}

fn check_media_type(t: &str) -> Result<()> {
    if !t.starts_with("image/") {
        return Err(ConfigError::Invalid(format!(
            "map must be an image, got {t:?}"
        )));
    }
    Ok(())
}

fn check_scanner_id(id: &str) -> Result<()> {
    if id == "density" || !is_valid_scanner_id(id) {
        return Err(ConfigError::Invalid(format!("invalid scanner id {id:?}")));
    }
    Ok(())
}

fn check_position(x: f64, y: f64) -> Result<()> {
    let ok = |v: f64| (0.0..=1.0).contains(&v);
    if !ok(x) || !ok(y) {
        return Err(ConfigError::Invalid(format!(
            "position ({x}, {y}) outside [0, 1]"
        )));
    }
    Ok(())
}

fn persist(path: &Path, doc: &ConfigDoc) -> Result<()> {
    let err = |e: std::io::Error| ConfigError::Storage(format!("{}: {e}", path.display()));
    let bytes = serde_json::to_vec_pretty(doc).map_err(|e| ConfigError::Storage(e.to_string()))?;
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(err)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("config")
    ));
    let mut f = fs::File::create(&tmp).map_err(err)?;
    f.write_all(&bytes).map_err(err)?;
    f.sync_all().map_err(err)?;
    fs::rename(&tmp, path).map_err(err)
}

mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn root() -> Caller {
        Caller::new("root", Role::SuperAdmin)
    }

    fn png() -> FloorMap {
        FloorMap {
            media_type: "image/png".into(),
            data: vec![0x89, b'P', b'N', b'G', 0, 1, 2],
        }
    }

    /// Entity with an admin "ann" and a user "uma", one building and floor.
    fn seeded(svc: &ConfigService) -> (Entity, Building, Floor) {
        let e = svc.create_entity(&root(), "Campus").unwrap();
        svc.add_user(&root(), e.id, "ann", Role::Admin).unwrap();
        svc.add_user(&root(), e.id, "uma", Role::User).unwrap();
        let ann = Caller::new("ann", Role::Admin);
        let b = svc.create_building(&ann, e.id, "Library").unwrap();
        let f = svc
            .create_floor(&ann, b.id, "Ground", 10, Some(png()))
            .unwrap();
        (svc.entity(&root(), e.id).unwrap(), b, f)
    }

    #[test]
    fn only_super_admin_creates_entities() {
        let svc = ConfigService::in_memory();
        for role in [Role::User, Role::Admin] {
            assert!(matches!(
                svc.create_entity(&Caller::new("x", role), "E"),
                Err(ConfigError::Forbidden(_))
            ));
        }
        assert!(svc.create_entity(&root(), "E").is_ok());
    }

    #[test]
    fn user_cannot_create_building() {
        let svc = ConfigService::in_memory();
        let (e, _, _) = seeded(&svc);
        let uma = Caller::new("uma", Role::User);
        assert!(matches!(
            svc.create_building(&uma, e.id, "B"),
            Err(ConfigError::Forbidden(_))
        ));
        assert_eq!(svc.list_buildings(&uma).len(), 1);
    }

    #[test]
    fn member_role_is_capped_by_token_role() {
        let svc = ConfigService::in_memory();
        let (_, b, _) = seeded(&svc);
        // ann's token only carries User
        let weak = Caller::new("ann", Role::User);
        assert!(matches!(
            svc.create_floor(&weak, b.id, "F", 3, None),
            Err(ConfigError::Forbidden(_))
        ));
    }

    #[test]
    fn non_members_see_nothing() {
        let svc = ConfigService::in_memory();
        let (e, b, f) = seeded(&svc);
        let stranger = Caller::new("zed", Role::Admin);
        assert!(svc.list_entities(&stranger).is_empty());
        assert!(svc.list_buildings(&stranger).is_empty());
        assert!(matches!(
            svc.entity(&stranger, e.id),
            Err(ConfigError::Forbidden(_))
        ));
        assert!(matches!(
            svc.floor(&stranger, f.id),
            Err(ConfigError::Forbidden(_))
        ));
        assert!(matches!(
            svc.building(&stranger, b.id + 100),
            Err(ConfigError::NotFound(_))
        ));
    }

    #[test]
    fn admin_cannot_grant_super_admin() {
        let svc = ConfigService::in_memory();
        let (e, _, _) = seeded(&svc);
        let ann = Caller::new("ann", Role::Admin);
        assert!(matches!(
            svc.add_user(&ann, e.id, "eve", Role::SuperAdmin),
            Err(ConfigError::Forbidden(_))
        ));
        svc.add_user(&ann, e.id, "bob", Role::Admin).unwrap();
        assert!(matches!(
            svc.add_user(&ann, e.id, "bob", Role::User),
            Err(ConfigError::Conflict(_))
        ));
    }

    #[test]
    fn placement_round_trip_and_uniqueness() {
        let svc = ConfigService::in_memory();
        let (_, b, f) = seeded(&svc);
        let ann = Caller::new("ann", Role::Admin);
        let p = svc.place_scanner(&ann, f.id, "s-1", 0.5, 0.5).unwrap();
        assert_eq!(svc.floor_scanners(&ann, f.id).unwrap(), [p]);

        let other = svc.create_floor(&ann, b.id, "First", 5, None).unwrap();
        assert!(matches!(
            svc.place_scanner(&ann, other.id, "s-1", 0.1, 0.1),
            Err(ConfigError::Conflict(_))
        ));
        assert!(matches!(
            svc.place_scanner(&ann, f.id, "s-2", 1.5, 0.1),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            svc.place_scanner(&ann, f.id, "s/2", 0.1, 0.1),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            svc.place_scanner(&ann, f.id, "s-2", f64::NAN, 0.1),
            Err(ConfigError::Invalid(_))
        ));

        svc.move_scanner(&ann, f.id, "s-1", 0.0, 1.0).unwrap();
        assert_eq!(svc.building_scanners(&ann, b.id).unwrap(), ["s-1"]);
        svc.remove_scanner(&ann, f.id, "s-1").unwrap();
        svc.place_scanner(&ann, other.id, "s-1", 0.1, 0.1).unwrap();
    }

    #[test]
    fn deleting_a_building_cascades() {
        let svc = ConfigService::in_memory();
        let (_, b, f) = seeded(&svc);
        let ann = Caller::new("ann", Role::Admin);
        svc.place_scanner(&ann, f.id, "s-1", 0.5, 0.5).unwrap();
        svc.delete_building(&ann, b.id).unwrap();
        let doc = svc.snapshot();
        assert!(doc.floors.is_empty() && doc.placements.is_empty());
    }

    #[test]
    fn max_density_must_be_positive() {
        let svc = ConfigService::in_memory();
        let (_, _, f) = seeded(&svc);
        let ann = Caller::new("ann", Role::Admin);
        assert!(matches!(
            svc.set_max_density(&ann, f.id, 0),
            Err(ConfigError::Invalid(_))
        ));
        assert_eq!(svc.set_max_density(&ann, f.id, 25).unwrap().max_density, 25);
    }

    #[test]
    fn persisted_and_reloaded() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("conf").join("gateway.json");
        let svc = ConfigService::open(&path).unwrap();
        let (_, _, f) = seeded(&svc);
        let reopened = ConfigService::open(&path).unwrap();
        assert_eq!(reopened.snapshot(), svc.snapshot());
        assert_eq!(reopened.floor(&root(), f.id).unwrap().map, Some(png()));
        let names: Vec<_> = fs::read_dir(path.parent().unwrap())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert_eq!(names, ["gateway.json"]);
    }

    #[test]
    fn failed_mutation_changes_nothing() {
        let svc = ConfigService::in_memory();
        let (e, _, _) = seeded(&svc);
        let before = svc.snapshot();
        let _ = svc.create_building(&Caller::new("ann", Role::Admin), e.id, "   ");
        assert_eq!(svc.snapshot(), before);
    }
}
