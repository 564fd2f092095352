//! Declarative desk-scale scene model and its geometric queries.
//!
//! Scenes are TOML documents (`format = "twinsim-scene"`, `version = 1`).
//! Lengths are meters; angles are degrees in the file and radians in memory.
//! See `docs/scene-format.md` for the full schema.

pub mod geometry;
pub mod traffic;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use geometry::{ray_segment, Aabb, OrientedRect, Polygon, Vec2};
pub use traffic::{ElementChange, ElementKind, ElementSnapshot, ElementStates, LightState, Pose2, TrafficElement};

pub const SCENE_FORMAT: &str = "twinsim-scene";
pub const SCENE_VERSION: u32 = 1;
const DEFAULT_DETECTION_RADIUS: f64 = 0.3;
const DEFAULT_HALF_EXTENT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrainKind {
    Asphalt,
    Dirt,
    Lawn,
    Snow,
    Water,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerrainPatch {
    pub id: String,
    pub kind: TerrainKind,
    pub friction_scale: f64,
    pub polygon: Polygon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleKind {
    Wall,
    ConstructionBox,
    TrafficCone,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    pub id: String,
    pub kind: ObstacleKind,
    pub polygon: Polygon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub id: String,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedPose {
    pub name: String,
    pub pose: Pose2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedPoint {
    pub name: String,
    pub point: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub name: String,
    pub points: Vec<Vec2>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub point: Vec2,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub name: String,
    pub bounds: Aabb,
    pub terrain: Vec<TerrainPatch>,
    pub collision: Vec<Obstacle>,
    pub traffic: Vec<TrafficElement>,
    pub landmarks: Vec<Landmark>,
    pub spawns: Vec<NamedPose>,
    pub goals: Vec<NamedPoint>,
    pub lanes: Vec<Polyline>,
    pub routes: Vec<Polyline>,
}

impl Scene {
    pub fn empty(name: &str) -> Self {
        let h = DEFAULT_HALF_EXTENT;
        Self {
            name: name.to_string(),
            bounds: Aabb {
                min: Vec2::new(-h, -h),
                max: Vec2::new(h, h),
            },
            terrain: Vec::new(),
            collision: Vec::new(),
            traffic: Vec::new(),
            landmarks: Vec::new(),
            spawns: Vec::new(),
            goals: Vec::new(),
            lanes: Vec::new(),
            routes: Vec::new(),
        }
    }

    /// Parses and validates a scene document.
    pub fn load(text: &str) -> Result<Self, CoreError> {
        let doc: SceneDoc = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(0);
            CoreError::SceneParse {
                line,
                message: e.message().to_string(),
            }
        })?;
        let scene = doc.into_scene()?;
        scene.validate()?;
        Ok(scene)
    }

    /// Checks every scene invariant, naming the offending element.
    pub fn validate(&self) -> Result<(), CoreError> {
        let invalid = |id: &str, message: String| CoreError::SceneInvalid {
            id: id.to_string(),
            message,
        };
        if !self.bounds.is_valid() {
            return Err(invalid("bounds", "min must be strictly below max".into()));
        }
        let mut ids = BTreeSet::new();
        let mut unique = |id: &str| {
            if ids.insert(id.to_string()) {
                Ok(())
            } else {
                Err(invalid(id, "duplicate id".into()))
            }
        };
        let within = |id: &str, poly: &Polygon| {
            if poly.vertices().iter().all(|v| self.bounds.contains(v)) {
                Ok(())
            } else {
                Err(invalid(id, "geometry extends outside the scene bounds".into()))
            }
        };
        for t in &self.terrain {
            unique(&t.id)?;
            if !t.polygon.is_simple() {
                return Err(invalid(&t.id, "polygon is not simple".into()));
            }
            if !(t.friction_scale > 0.0 && t.friction_scale.is_finite()) {
                return Err(invalid(&t.id, format!("friction_scale must be positive, got {}", t.friction_scale)));
            }
            within(&t.id, &t.polygon)?;
        }
        for o in &self.collision {
            unique(&o.id)?;
            if !o.polygon.is_simple() {
                return Err(invalid(&o.id, "polygon is not simple".into()));
            }
            if !o.polygon.is_convex() {
                return Err(invalid(&o.id, "collision polygons must be convex; split it into convex parts".into()));
            }
            within(&o.id, &o.polygon)?;
        }
        for e in &self.traffic {
            unique(&e.id)?;
            if !(e.detection_radius > 0.0) {
                return Err(invalid(&e.id, "detection_radius must be positive".into()));
            }
            match (e.kind, e.state) {
                (ElementKind::TrafficLight, None) => {
                    return Err(invalid(&e.id, "traffic lights need an initial state".into()))
                }
                (ElementKind::TrafficLight, Some(_)) => {}
                (kind, Some(_)) => return Err(invalid(&e.id, format!("{kind} elements carry no state"))),
                (_, None) => {}
            }
            if !self.bounds.contains(&e.pose.position()) {
                return Err(invalid(&e.id, "element lies outside the scene bounds".into()));
            }
        }
        for l in &self.landmarks {
            unique(&l.id)?;
        }
        // Spawns, goals and polylines are separate namespaces so a goal can
        // share its spawn's name.
        let mut names = BTreeSet::new();
        for s in &self.spawns {
            if !names.insert(s.name.as_str()) {
                return Err(invalid(&s.name, "duplicate spawn name".into()));
            }
            if !self.bounds.contains(&s.pose.position()) {
                return Err(invalid(&s.name, "spawn lies outside the scene bounds".into()));
            }
        }
        names.clear();
        for g in &self.goals {
            if !names.insert(g.name.as_str()) {
                return Err(invalid(&g.name, "duplicate goal name".into()));
            }
            if !self.bounds.contains(&g.point) {
                return Err(invalid(&g.name, "goal lies outside the scene bounds".into()));
            }
        }
        names.clear();
        for p in self.lanes.iter().chain(&self.routes) {
            if !names.insert(p.name.as_str()) {
                return Err(invalid(&p.name, "duplicate lane or route name".into()));
            }
            if p.points.len() < 2 {
                return Err(invalid(&p.name, "polyline needs at least two points".into()));
            }
            if !p.points.iter().all(|v| self.bounds.contains(v)) {
                return Err(invalid(&p.name, "polyline extends outside the scene bounds".into()));
            }
        }
        Ok(())
    }

    /// Nearest hit of the ray `origin + t·direction` with any collision edge
    /// no farther than `max_dist`. The returned distance is the Euclidean
    /// distance from the origin to the hit point.
    pub fn raycast(&self, origin: Vec2, direction: Vec2, max_dist: f64) -> Option<RayHit> {
        let mut best: Option<RayHit> = None;
        for obstacle in &self.collision {
            for (a, b) in obstacle.polygon.edges() {
                if let Some(t) = ray_segment(&origin, &direction, &a, &b) {
                    let point = origin + direction * t;
                    let distance = (point - origin).norm();
                    if distance <= max_dist && best.is_none_or(|h| distance < h.distance) {
                        best = Some(RayHit { point, distance });
                    }
                }
            }
        }
        best
    }

    /// True iff the footprint overlaps a collision polygon (open overlap) or
    /// is not fully inside the bounds.
    pub fn footprint_collision(&self, footprint: &OrientedRect) -> bool {
        let poly = footprint.polygon();
        if !poly.vertices().iter().all(|v| self.bounds.contains(v)) {
            return true;
        }
        self.collision.iter().any(|o| o.polygon.overlaps_convex(&poly))
    }

    /// Friction scale at `point`: the last declared patch containing it wins;
    /// plain asphalt (1.0) elsewhere.
    pub fn terrain_at(&self, point: Vec2) -> Result<f64, CoreError> {
        if !self.bounds.contains(&point) {
            return Err(CoreError::OutOfBounds { x: point.x, y: point.y });
        }
        Ok(self
            .terrain
            .iter()
            .rev()
            .find(|t| t.polygon.contains(&point))
            .map_or(1.0, |t| t.friction_scale))
    }

    pub fn spawn(&self, name: &str) -> Option<Pose2> {
        self.spawns.iter().find(|s| s.name == name).map(|s| s.pose)
    }

    pub fn goal(&self, name: &str) -> Option<Vec2> {
        self.goals.iter().find(|g| g.name == name).map(|g| g.point)
    }

    pub fn route(&self, name: &str) -> Option<&Polyline> {
        self.routes.iter().find(|r| r.name == name)
    }

    pub fn element(&self, id: &str) -> Option<&TrafficElement> {
        self.traffic.iter().find(|e| e.id == id)
    }

    /// Loads one of the bundled desk-scale maps by name.
    pub fn fixture(name: &str) -> Result<Self, CoreError> {
        let text = fixture_source(name).ok_or_else(|| CoreError::SceneInvalid {
            id: name.to_string(),
            message: format!("no bundled scene with this name (available: {})", FIXTURE_NAMES.join(", ")),
        })?;
        Self::load(text)
    }
}

pub const FIXTURE_NAMES: [&str; 5] = [
    "parking_school",
    "intersection_school",
    "driving_school",
    "tiny_town",
    "square_room",
];

pub fn fixture_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "parking_school" => include_str!("../../fixtures/parking_school.toml"),
        "intersection_school" => include_str!("../../fixtures/intersection_school.toml"),
        "driving_school" => include_str!("../../fixtures/driving_school.toml"),
        "tiny_town" => include_str!("../../fixtures/tiny_town.toml"),
        "square_room" => include_str!("../../fixtures/square_room.toml"),
        _ => return None,
    })
}

// ---- document schema ----

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    format: Option<String>,
    version: Option<u32>,
    name: Option<String>,
    #[allow(dead_code)]
    description: Option<String>,
    bounds: Option<BoundsDoc>,
    #[serde(default)]
    terrain: Vec<TerrainDoc>,
    #[serde(default)]
    collision: Vec<CollisionDoc>,
    #[serde(default)]
    traffic: Vec<TrafficDoc>,
    #[serde(default)]
    landmarks: Vec<Landmark>,
    #[serde(default)]
    spawns: Vec<SpawnDoc>,
    #[serde(default)]
    goals: Vec<GoalDoc>,
    #[serde(default)]
    lanes: Vec<PolylineDoc>,
    #[serde(default)]
    routes: Vec<PolylineDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsDoc {
    min: [f64; 2],
    max: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RectDoc {
    center: [f64; 2],
    size: [f64; 2],
    #[serde(default)]
    yaw: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TerrainDoc {
    id: String,
    kind: TerrainKind,
    friction_scale: f64,
    polygon: Option<Vec<[f64; 2]>>,
    rect: Option<RectDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CollisionDoc {
    id: String,
    kind: ObstacleKind,
    polygon: Option<Vec<[f64; 2]>>,
    rect: Option<RectDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrafficDoc {
    id: String,
    kind: ElementKind,
    state: Option<LightState>,
    /// `[x, y, yaw_deg]`
    pose: [f64; 3],
    detection_radius: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpawnDoc {
    name: String,
    pose: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoalDoc {
    name: String,
    position: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolylineDoc {
    name: String,
    points: Vec<[f64; 2]>,
}

fn shape(id: &str, polygon: Option<Vec<[f64; 2]>>, rect: Option<RectDoc>) -> Result<Polygon, CoreError> {
    match (polygon, rect) {
        (Some(pts), None) => Ok(Polygon::new(pts.iter().map(|p| Vec2::new(p[0], p[1])).collect())),
        (None, Some(r)) => {
            if !(r.size[0] > 0.0 && r.size[1] > 0.0) {
                return Err(CoreError::SceneInvalid {
                    id: id.to_string(),
                    message: "rect size must be positive".into(),
                });
            }
            Ok(Polygon::rect(Vec2::new(r.center[0], r.center[1]), r.size[0], r.size[1], r.yaw.to_radians()))
        }
        _ => Err(CoreError::SceneInvalid {
            id: id.to_string(),
            message: "exactly one of `polygon` or `rect` is required".into(),
        }),
    }
}

fn pose(p: [f64; 3]) -> Pose2 {
    Pose2::new(p[0], p[1], p[2].to_radians())
}

impl SceneDoc {
    fn into_scene(self) -> Result<Scene, CoreError> {
        if let Some(format) = &self.format {
            if format != SCENE_FORMAT {
                return Err(CoreError::SceneInvalid {
                    id: "format".into(),
                    message: format!("expected `{SCENE_FORMAT}`, found `{format}`"),
                });
            }
        }
        let version = self.version.unwrap_or(SCENE_VERSION);
        if version != SCENE_VERSION {
            return Err(CoreError::SceneInvalid {
                id: "version".into(),
                message: format!("unsupported scene version {version} (this build reads version {SCENE_VERSION})"),
            });
        }
        let mut scene = Scene::empty(self.name.as_deref().unwrap_or("unnamed"));
        if let Some(b) = self.bounds {
            scene.bounds = Aabb {
                min: Vec2::new(b.min[0], b.min[1]),
                max: Vec2::new(b.max[0], b.max[1]),
            };
        }
        for t in self.terrain {
            let polygon = shape(&t.id, t.polygon, t.rect)?;
            scene.terrain.push(TerrainPatch {
                id: t.id,
                kind: t.kind,
                friction_scale: t.friction_scale,
                polygon,
            });
        }
        for c in self.collision {
            let polygon = shape(&c.id, c.polygon, c.rect)?;
            scene.collision.push(Obstacle {
                id: c.id,
                kind: c.kind,
                polygon,
            });
        }
        scene.traffic = self
            .traffic
            .into_iter()
            .map(|t| TrafficElement {
                id: t.id,
                kind: t.kind,
                state: t.state,
                pose: pose(t.pose),
                detection_radius: t.detection_radius.unwrap_or(DEFAULT_DETECTION_RADIUS),
            })
            .collect();
        scene.landmarks = self.landmarks;
        scene.spawns = self
            .spawns
            .into_iter()
            .map(|s| NamedPose {
                name: s.name,
                pose: pose(s.pose),
            })
            .collect();
        scene.goals = self
            .goals
            .into_iter()
            .map(|g| NamedPoint {
                name: g.name,
                point: Vec2::new(g.position[0], g.position[1]),
            })
            .collect();
        let polylines = |v: Vec<PolylineDoc>| -> Vec<Polyline> {
            v.into_iter()
                .map(|p| Polyline {
                    name: p.name,
                    points: p.points.iter().map(|q| Vec2::new(q[0], q[1])).collect(),
                })
                .collect()
        };
        scene.lanes = polylines(self.lanes);
        scene.routes = polylines(self.routes);
        Ok(scene)
    }
}
