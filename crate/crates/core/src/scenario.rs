//! JSON scenario files.
//!
//! A scenario names a robot (built-in when absent), the initial joint
//! configuration, the objects, the candidate grasps in the target frame,
//! a disturbance schedule and a partial [`SimParams`] section. It may
//! instead start from a built-in scene and extend it. Relative paths
//! resolve against the scenario file's directory.
//!
//! ```json
//! {
//!   "name": "bowl_left_bottom",
//!   "initial_q": "left_bottom",
//!   "objects": [
//!     {"id": "table", "role": "environment", "shape": {"kind": "half_space", "normal": [0, 0, 1], "offset": 0}},
//!     {"id": "bowl", "role": "target", "shape": {"kind": "procedural", "object": "bowl"},
//!      "pose": {"xyz": [0.45, 0, 0]}}
//!   ],
//!   "candidates": [[[0.05, 0, 0.055], [0.11, 0, 0.055]]],
//!   "params": {"fields": {"v_const": 0.25}}
//! }
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Role, SdfObject, Shape};
use crate::kinematics::{builtin_arm_hand, JointConfig, RobotModel};
use crate::scenes::{self, InitialPose, ObjectKind};
use crate::sim::{DisturbanceEvent, DisturbanceKind, Scene, SimParams};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoseSpec {
    pub xyz: [f64; 3],
    /// Roll, pitch, yaw (rad), applied as Rz(yaw) Ry(pitch) Rx(roll).
    pub rpy: [f64; 3],
}

impl PoseSpec {
    pub fn at(xyz: [f64; 3]) -> Self {
        PoseSpec { xyz, rpy: [0.0; 3] }
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::new(self.xyz[0], self.xyz[1], self.xyz[2]),
            UnitQuaternion::from_euler_angles(self.rpy[0], self.rpy[1], self.rpy[2]),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeSpec {
    Superellipsoid {
        a: f64,
        b: f64,
        c: f64,
        e1: f64,
        e2: f64,
    },
    /// Point cloud read from a CSV file of `x,y,z` rows.
    PointCloud {
        file: PathBuf,
    },
    HalfSpace {
        normal: [f64; 3],
        offset: f64,
    },
    /// One of the built-in object models by name (box, bowl, dish, mug,
    /// wine_glass).
    Procedural {
        object: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: String,
    pub role: Role,
    pub shape: ShapeSpec,
    #[serde(default)]
    pub pose: PoseSpec,
    /// Role default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceSpec {
    ObjectTeleport {
        time: f64,
        object: String,
        pose: PoseSpec,
    },
    ObjectVelocity {
        time: f64,
        object: String,
        linear: [f64; 3],
        #[serde(default)]
        angular: [f64; 3],
        duration: f64,
    },
    RobotPush {
        time: f64,
        qdot_offset: Vec<f64>,
        duration: f64,
    },
}

/// A named pose of the built-in model or explicit joint values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    Named(String),
    Joints(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Robot description file; the built-in arm-hand model when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub robot: Option<PathBuf>,
    /// Built-in scene to start from; see [`builtin_scene`].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_q: Option<InitialSpec>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub objects: Vec<ObjectSpec>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<Vec<[f64; 3]>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub disturbances: Vec<DisturbanceSpec>,
    /// Partial [`SimParams`]; missing keys keep their defaults.
    #[serde(skip_serializing_if = "Value::is_null")]
    pub params: Value,
    pub seed: u64,
}

/// Everything needed to run an episode.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub scene: Scene,
    pub model: RobotModel,
    pub params: SimParams,
    pub seed: u64,
}

/// Built-in scenes by name: `<object>_<pose>` grasps, `bowl_two_obstacles`,
/// `bowl_disturbance` and `wine_glass_moving_boxes` (seeded).
pub fn builtin_scene(name: &str, seed: u64) -> Result<(Scene, SimParams)> {
    let mut params = SimParams::default();
    let scene = match name {
        "bowl_two_obstacles" => scenes::bench_scene(),
        "bowl_disturbance" => {
            params.success_after = scenes::DISTURBANCE_ARM_TIME;
            scenes::disturbance_scene()
        }
        "wine_glass_moving_boxes" => scenes::moving_boxes_scene(seed),
        _ => ObjectKind::ALL
            .into_iter()
            .flat_map(|k| InitialPose::ALL.into_iter().map(move |p| (k, p)))
            .find(|(k, p)| format!("{}_{}", k.name(), p.name()) == name)
            .map(|(k, p)| scenes::grasp_scene(k, p))
            .ok_or_else(|| Error::Scenario(format!("unknown built-in scene {name:?}")))?,
    };
    Ok((scene, params))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn build_object(spec: &ObjectSpec, base: &Path) -> Result<SdfObject> {
    let shape = match &spec.shape {
        ShapeSpec::Superellipsoid { a, b, c, e1, e2 } => Shape::Superellipsoid {
            a: *a,
            b: *b,
            c: *c,
            e1: *e1,
            e2: *e2,
        },
        ShapeSpec::PointCloud { file } => {
            Shape::PointCloud(Arc::new(PointCloud::load(&resolve(base, file))?))
        }
        ShapeSpec::HalfSpace { normal, offset } => {
            let n = Vector3::from(*normal);
            if !(n.norm() > 0.0) {
                return Err(Error::Scenario(format!(
                    "object {:?}: half-space normal is zero",
                    spec.id
                )));
            }
            Shape::HalfSpace {
                normal: n.normalize(),
                offset: *offset,
            }
        }
        ShapeSpec::Procedural { object } => {
            let kind = ObjectKind::from_name(object).ok_or_else(|| {
                Error::Scenario(format!(
                    "object {:?}: unknown procedural model {object:?}",
                    spec.id
                ))
            })?;
            scenes::target_object(kind).shape
        }
    };
    let mut obj = SdfObject::new(spec.id.clone(), shape, spec.pose.isometry(), spec.role)
        .map_err(|e| Error::Scenario(format!("object {:?}: {e}", spec.id)))?;
    if let Some(m) = spec.margin {
        if !(m >= 0.0) {
            return Err(Error::Scenario(format!(
                "object {:?}: margin must be non-negative",
                spec.id
            )));
        }
        obj = obj.with_margin(m);
    }
    Ok(obj)
}

fn build_disturbance(spec: &DisturbanceSpec) -> DisturbanceEvent {
    match spec {
        DisturbanceSpec::ObjectTeleport { time, object, pose } => DisturbanceEvent {
            time: *time,
            kind: DisturbanceKind::ObjectTeleport {
                object: object.clone(),
                pose: pose.isometry(),
            },
        },
        DisturbanceSpec::ObjectVelocity {
            time,
            object,
            linear,
            angular,
            duration,
        } => DisturbanceEvent {
            time: *time,
            kind: DisturbanceKind::ObjectVelocity {
                object: object.clone(),
                linear: Vector3::from(*linear),
                angular: Vector3::from(*angular),
                duration: *duration,
            },
        },
        DisturbanceSpec::RobotPush {
            time,
            qdot_offset,
            duration,
        } => DisturbanceEvent {
            time: *time,
            kind: DisturbanceKind::RobotPush {
                qdot_offset: qdot_offset.clone(),
                duration: *duration,
            },
        },
    }
}

fn initial_joints(spec: &InitialSpec) -> Result<JointConfig> {
    match spec {
        InitialSpec::Named(name) => InitialPose::from_name(name)
            .map(InitialPose::joints)
            .ok_or_else(|| Error::Scenario(format!("unknown initial pose {name:?}"))),
        InitialSpec::Joints(q) => Ok(JointConfig::from_slice(q)),
    }
}

/// Parses a `key=value` override. The value is read as JSON when it
/// parses, as a bare string otherwise.
pub fn parse_override(s: &str) -> Result<(String, Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {s:?} is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("override {s:?} has an empty key")));
    }
    let value =
        serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    Ok((key.to_string(), value))
}

/// Sets the dotted `key` in `root`. Every segment must already exist, so a
/// typo is an error rather than a silently ignored field.
pub fn set_dotted(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let segments: Vec<&str> = key.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| {
            Error::Config(format!("override {key:?}: {seg:?} is not inside an object"))
        })?;
        let slot = obj
            .get_mut(*seg)
            .ok_or_else(|| Error::Config(format!("override {key:?}: unknown parameter {seg:?}")))?;
        if i + 1 == segments.len() {
            *slot = value;
            return Ok(());
        }
        cur = slot;
    }
    unreachable!("split yields at least one segment")
}

fn merge(dst: &mut Value, src: &Value) -> Result<()> {
    match (dst, src) {
        (Value::Object(d), Value::Object(s)) => {
            for (k, v) in s {
                let slot = d
                    .get_mut(k)
                    .ok_or_else(|| Error::Config(format!("unknown parameter {k:?}")))?;
                if slot.is_object() && v.is_object() {
                    merge(slot, v)?;
                } else {
                    *slot = v.clone();
                }
            }
            Ok(())
        }
        (_, Value::Null) => Ok(()),
        _ => Err(Error::Config("params section must be an object".into())),
    }
}

/// Applies a partial parameter object and then dotted overrides to `base`.
pub fn apply_params(
    base: &SimParams,
    partial: &Value,
    overrides: &[(String, Value)],
) -> Result<SimParams> {
    let mut v = serde_json::to_value(base).map_err(|e| Error::Config(e.to_string()))?;
    merge(&mut v, partial)?;
    for (k, val) in overrides {
        set_dotted(&mut v, k, val.clone())?;
    }
    let params: SimParams =
        serde_json::from_value(v).map_err(|e| Error::Config(format!("parameters: {e}")))?;
    params.validate()?;
    Ok(params)
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::parse(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Builds the scene, robot and parameters. `base` resolves relative
    /// paths; `seed` replaces the file's seed when given.
    pub fn build(
        &self,
        base: &Path,
        overrides: &[(String, Value)],
        seed: Option<u64>,
    ) -> Result<Scenario> {
        let seed = seed.unwrap_or(self.seed);
        let model = match &self.robot {
            Some(p) => RobotModel::from_file(&resolve(base, p))?,
            None => builtin_arm_hand(),
        };
        let (mut scene, base_params) = match &self.builtin {
            Some(name) => builtin_scene(name, seed)?,
            None => (
                Scene {
                    name: String::new(),
                    objects: Vec::new(),
                    candidates: Vec::new(),
                    initial_q: JointConfig::zeros(model.dof()),
                    disturbances: Vec::new(),
                },
                SimParams::default(),
            ),
        };
        if let Some(name) = &self.name {
            scene.name = name.clone();
        }
        if scene.name.is_empty() {
            scene.name = "scenario".into();
        }
        if let Some(q) = &self.initial_q {
            scene.initial_q = initial_joints(q)?;
        }
        for spec in &self.objects {
            scene.objects.push(build_object(spec, base)?);
        }
        if !self.candidates.is_empty() {
            scene.candidates = self
                .candidates
                .iter()
                .map(|c| c.iter().map(|p| Vector3::from(*p)).collect())
                .collect();
        }
        scene
            .disturbances
            .extend(self.disturbances.iter().map(build_disturbance));
        let params = apply_params(&base_params, &self.params, overrides)?;
        scene.validate(&model)?;
        Ok(Scenario {
            scene,
            model,
            params,
            seed,
        })
    }
}

/// Reads and builds a scenario file.
pub fn load_scenario(
    path: &Path,
    overrides: &[(String, Value)],
    seed: Option<u64>,
) -> Result<Scenario> {
    let file = ScenarioFile::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    file.build(base, overrides, seed)
}

/// Explicit scenario file for one grasp of the shipped suite.
pub fn grasp_scenario(kind: ObjectKind, pose: InitialPose) -> ScenarioFile {
    let [x, y, z] = scenes::OBJECT_POSITION;
    // The box frame sits at its centre.
    let lift = if kind == ObjectKind::Box { 0.05 } else { 0.0 };
    ScenarioFile {
        name: Some(format!("{}_{}", kind.name(), pose.name())),
        initial_q: Some(InitialSpec::Named(pose.name().into())),
        objects: vec![
            ObjectSpec {
                id: "table".into(),
                role: Role::Environment,
                shape: ShapeSpec::HalfSpace {
                    normal: [0.0, 0.0, 1.0],
                    offset: 0.0,
                },
                pose: PoseSpec::default(),
                margin: None,
            },
            ObjectSpec {
                id: kind.name().into(),
                role: Role::Target,
                shape: ShapeSpec::Procedural {
                    object: kind.name().into(),
                },
                pose: PoseSpec::at([x, y, z + lift]),
                margin: None,
            },
        ],
        candidates: scenes::candidates(kind)
            .iter()
            .map(|c| c.iter().map(|p| [p.x, p.y, p.z]).collect())
            .collect(),
        ..Default::default()
    }
}

/// Scenario file that refers to a built-in scene.
pub fn builtin_scenario(name: &str, seed: u64) -> ScenarioFile {
    ScenarioFile {
        name: None,
        builtin: Some(name.into()),
        seed,
        ..Default::default()
    }
}

/// Writes the shipped scenario set into `dir`: the 15 grasp scenes, the
/// benchmark scene, the disturbance scene and the moving-boxes scene.
/// Returns the written paths.
pub fn export_suite(dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for kind in ObjectKind::ALL {
        for pose in InitialPose::ALL {
            let path = dir.join(format!("{}_{}.json", kind.name(), pose.name()));
            grasp_scenario(kind, pose).save(&path)?;
            out.push(path);
        }
    }
    for name in [
        "bowl_two_obstacles",
        "bowl_disturbance",
        "wine_glass_moving_boxes",
    ] {
        let path = dir.join(format!("{name}.json"));
        builtin_scenario(name, 0).save(&path)?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_parsing() {
        assert_eq!(
            parse_override("fields.v_const=0.3").unwrap(),
            ("fields.v_const".into(), Value::from(0.3))
        );
        assert_eq!(
            parse_override("planner=linear").unwrap().1,
            Value::String("linear".into())
        );
        assert!(parse_override("novalue").is_err());
        assert!(parse_override("=1").is_err());
    }

    #[test]
    fn overrides_reach_nested_params() {
        let ov = vec![
            parse_override("tracker.horizon=0.2").unwrap(),
            parse_override("planner=linear").unwrap(),
        ];
        let p = apply_params(&SimParams::default(), &Value::Null, &ov).unwrap();
        assert_eq!(p.tracker.horizon, 0.2);
        assert_eq!(p.planner, crate::sim::PlannerKind::Linear);
    }

    #[test]
    fn unknown_override_key_is_rejected() {
        let ov = vec![parse_override("tracker.horizn=0.2").unwrap()];
        assert!(apply_params(&SimParams::default(), &Value::Null, &ov).is_err());
        let partial = serde_json::json!({"fields": {"nope": 1}});
        assert!(apply_params(&SimParams::default(), &partial, &[]).is_err());
    }

    #[test]
    fn invalid_override_value_is_rejected() {
        let ov = vec![parse_override("tracker.horizon=-1").unwrap()];
        assert!(apply_params(&SimParams::default(), &Value::Null, &ov).is_err());
    }

    #[test]
    fn grasp_scenario_round_trips_to_the_builtin_scene() {
        let file = grasp_scenario(ObjectKind::Box, InitialPose::CenterUp);
        let text = serde_json::to_string(&file).unwrap();
        let back: ScenarioFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, file);
        let built = back.build(Path::new("."), &[], None).unwrap();
        let reference = scenes::grasp_scene(ObjectKind::Box, InitialPose::CenterUp);
        assert_eq!(built.scene.name, reference.name);
        assert_eq!(built.scene.initial_q, reference.initial_q);
        assert_eq!(built.scene.candidates, reference.candidates);
        assert_eq!(built.scene.objects.len(), reference.objects.len());
        for (a, b) in built.scene.objects.iter().zip(&reference.objects) {
            assert_eq!(a.id, b.id);
            assert!((a.pose.translation.vector - b.pose.translation.vector).norm() < 1e-15);
        }
    }

    #[test]
    fn unknown_disturbance_object_fails_at_load() {
        let mut file = grasp_scenario(ObjectKind::Bowl, InitialPose::CenterUp);
        file.disturbances.push(DisturbanceSpec::ObjectTeleport {
            time: 1.0,
            object: "ghost".into(),
            pose: PoseSpec::default(),
        });
        assert!(matches!(
            file.build(Path::new("."), &[], None),
            Err(Error::Scenario(_))
        ));
    }

    #[test]
    fn builtin_reference_uses_seed() {
        let a = builtin_scenario("wine_glass_moving_boxes", 1)
            .build(Path::new("."), &[], None)
            .unwrap();
        let b = builtin_scenario("wine_glass_moving_boxes", 1)
            .build(Path::new("."), &[], Some(2))
            .unwrap();
        assert_eq!(a.seed, 1);
        assert_eq!(b.seed, 2);
        assert_ne!(a.scene.disturbances, b.scene.disturbances);
        assert!(builtin_scenario("nope", 0)
            .build(Path::new("."), &[], None)
            .is_err());
    }
}
