//! Session state and the training job that runs against it.

use std::collections::HashMap;
use std::hash::{BuildHasher, RandomState};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use mmnn::pipeline::{segment_image, train_network, ArchSpec, SegmentationResult};
use mmnn::training::StartPoints;
use mmnn::{AnnotatedPoint, BinaryMask, ConfusionCounts, FeatureConfig, Image, NetworkSpec, Objective, TrainConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveName {
    /// Outputs over object minus outputs over background.
    #[default]
    A,
    /// Balanced accuracy at the architecture's threshold.
    Ba,
}

/// Body of `POST /api/sessions/{id}/train`. Field names follow the CLI flags.
///
/// `arch` replaces `radius`, `d`, `a`, `b` and `threshold` when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRequest {
    pub arch: Option<ArchSpec>,
    pub radius: u32,
    pub d: f64,
    pub a: f64,
    pub b: f64,
    pub threshold: f64,
    pub subsample: usize,
    pub seed: u64,
    pub starts: usize,
    pub steps: usize,
    pub stepsize: f64,
    pub fdres: f64,
    pub objective: ObjectiveName,
    /// Use the initial weights as the first start.
    pub include_current: bool,
}

impl Default for TrainRequest {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            arch: None,
            radius: 3,
            d: 5.0,
            a: 5000.0,
            b: 0.0,
            threshold: 0.5,
            subsample: 10,
            seed: t.seed,
            starts: t.num_starts,
            steps: t.max_steps,
            stepsize: t.step_size,
            fdres: t.fd_resolution,
            objective: ObjectiveName::A,
            include_current: false,
        }
    }
}

impl TrainRequest {
    pub fn arch(&self) -> mmnn::Result<ArchSpec> {
        match &self.arch {
            Some(a) => Ok(a.clone()),
            None => ArchSpec::two_layer(FeatureConfig::new(self.radius, true), self.d, self.a, self.b, self.threshold),
        }
    }

    pub fn train_config(&self, arch: &ArchSpec) -> mmnn::Result<TrainConfig> {
        let cfg = TrainConfig {
            num_starts: self.starts,
            max_steps: self.steps,
            fd_resolution: self.fdres,
            step_size: self.stepsize,
            seed: self.seed,
            objective: match self.objective {
                ObjectiveName::A => Objective::ObjectiveA,
                ObjectiveName::Ba => Objective::BalancedAccuracy {
                    threshold: arch.threshold,
                },
            },
            start_points: if self.include_current {
                StartPoints::IncludeCurrent
            } else {
                StartPoints::Random
            },
            ..TrainConfig::default()
        };
        cfg.validate()?;
        if self.subsample == 0 {
            return Err(mmnn::Error::Config("subsample factor must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&arch.threshold) {
            return Err(mmnn::Error::Config(format!("threshold must lie in [0, 1], got {}", arch.threshold)));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub balanced_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionCounts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training_objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub winning_start: Option<usize>,
    pub object_pixels: usize,
    pub zero_vector_events: u64,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum JobStatus {
    Idle,
    Running { progress: f64 },
    Done(JobReport),
    Failed { reason: String },
}

impl JobStatus {
    pub fn is_running(&self) -> bool {
        matches!(self, JobStatus::Running { .. })
    }
}

/// What the last finished job was trained with; landscapes reuse it.
#[derive(Debug, Clone)]
pub struct TrainingSetup {
    pub arch: ArchSpec,
    pub subsample: usize,
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub image: Arc<Image>,
    pub gold: Option<Arc<BinaryMask>>,
    pub points: Vec<AnnotatedPoint>,
    pub network: Option<NetworkSpec>,
    pub result: Option<Arc<SegmentationResult>>,
    pub setup: Option<TrainingSetup>,
    /// Job `n` lives at index `n - 1`.
    pub jobs: Vec<JobStatus>,
}

impl Session {
    pub fn status(&self) -> JobStatus {
        self.jobs.last().cloned().unwrap_or(JobStatus::Idle)
    }

    pub fn running(&self) -> bool {
        self.jobs.iter().any(JobStatus::is_running)
    }
}

pub type SharedSession = Arc<Mutex<Session>>;

/// All live sessions plus the directory uploads are spilled to.
#[derive(Debug)]
pub struct Store {
    sessions: RwLock<HashMap<String, SharedSession>>,
    data_dir: PathBuf,
    counter: AtomicU64,
    hasher: RandomState,
}

impl Store {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            sessions: RwLock::default(),
            data_dir: data_dir.into(),
            counter: AtomicU64::new(0),
            hasher: RandomState::new(),
        }
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    fn fresh_id(&self) -> String {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_nanos());
        format!("{:016x}", self.hasher.hash_one((n, nanos)))
    }

    /// Registers a session; `files` are written under `<data_dir>/<id>/`.
    pub fn create(&self, image: Image, gold: Option<BinaryMask>, files: &[(&str, &[u8])]) -> std::io::Result<String> {
        let id = self.fresh_id();
        let dir = self.data_dir.join(&id);
        std::fs::create_dir_all(&dir)?;
        for (name, bytes) in files {
            std::fs::write(dir.join(name), bytes)?;
        }
        let session = Session {
            id: id.clone(),
            image: Arc::new(image),
            gold: gold.map(Arc::new),
            points: Vec::new(),
            network: None,
            result: None,
            setup: None,
            jobs: Vec::new(),
        };
        self.sessions
            .write()
            .expect("session table poisoned")
            .insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(id)
    }

    pub fn get(&self, id: &str) -> Option<SharedSession> {
        self.sessions.read().expect("session table poisoned").get(id).cloned()
    }
}

/// Everything a job needs, copied out of the session so the lock is not held while training.
#[derive(Debug, Clone)]
pub struct JobInput {
    pub image: Arc<Image>,
    pub gold: Option<Arc<BinaryMask>>,
    pub points: Vec<AnnotatedPoint>,
    pub request: TrainRequest,
}

#[derive(Debug)]
pub struct JobOutput {
    pub network: NetworkSpec,
    pub result: SegmentationResult,
    pub setup: TrainingSetup,
    pub report: JobReport,
}

/// Trains on the subsampled pair when a gold mask is present. Without one the
/// untrained network is built from the full-resolution image.
pub fn run_job(input: &JobInput, progress: &dyn Fn(f64)) -> mmnn::Result<JobOutput> {
    let req = &input.request;
    let arch = req.arch()?;
    let cfg = req.train_config(&arch)?;
    if input.points.is_empty() {
        return Err(mmnn::Error::Config("place at least one point before training".into()));
    }
    let (network, training_objective, winning_start) = match &input.gold {
        Some(gold) => {
            let t = train_network(&input.image, gold, &input.points, &arch, &cfg, req.subsample)?;
            (t.network, Some(t.best_objective), Some(t.winner))
        }
        None => (arch.build(&input.image, &input.points)?, None, None),
    };
    progress(0.5);
    let mut result = segment_image(&input.image, &network, &arch.features, arch.threshold)?;
    if let Some(gold) = &input.gold {
        result.evaluate(gold)?;
    }
    let report = JobReport {
        balanced_accuracy: result.balanced_accuracy,
        confusion: result.confusion,
        training_objective,
        winning_start,
        object_pixels: result.mask.count(),
        zero_vector_events: result.diagnostics.zero_vector_events,
        elapsed_ms: result.diagnostics.elapsed_ms,
    };
    Ok(JobOutput {
        network,
        result,
        setup: TrainingSetup {
            arch,
            subsample: req.subsample,
        },
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_defaults_and_overrides() {
        let r: TrainRequest = serde_json::from_str("{}").unwrap();
        assert_eq!(r, TrainRequest::default());
        let r: TrainRequest = serde_json::from_str(r#"{"seed": 4, "objective": "ba", "threshold": 0.3}"#).unwrap();
        let arch = r.arch().unwrap();
        let cfg = r.train_config(&arch).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.objective, Objective::BalancedAccuracy { threshold: 0.3 });
        assert!(serde_json::from_str::<TrainRequest>(r#"{"sed": 4}"#).is_err());
        let bad = TrainRequest {
            subsample: 0,
            ..TrainRequest::default()
        };
        assert!(bad.train_config(&bad.arch().unwrap()).is_err());
    }

    #[test]
    fn status_json_shape() {
        assert_eq!(serde_json::to_value(JobStatus::Idle).unwrap(), serde_json::json!({"state": "idle"}));
        assert_eq!(
            serde_json::to_value(JobStatus::Running { progress: 0.5 }).unwrap(),
            serde_json::json!({"state": "running", "progress": 0.5})
        );
        let v = serde_json::to_value(JobStatus::Failed { reason: "x".into() }).unwrap();
        assert_eq!(v["state"], "failed");
    }

    #[test]
    fn ids_are_unique() {
        let dir = std::env::temp_dir().join(format!("mmnn-store-{}", std::process::id()));
        let store = Store::new(&dir);
        let img = Image::from_gray8(2, 2, &[0, 1, 2, 3]).unwrap();
        let a = store.create(img.clone(), None, &[("image.bin", b"x")]).unwrap();
        let b = store.create(img, None, &[]).unwrap();
        assert_ne!(a, b);
        assert!(dir.join(&a).join("image.bin").exists());
        assert!(store.get(&a).is_some() && store.get("nope").is_none());
        std::fs::remove_dir_all(dir).unwrap();
    }
}
