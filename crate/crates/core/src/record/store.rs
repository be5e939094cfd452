use super::{CloudStream, ConversionReport, Episode, Header, ImageStream, RecordError, StateStream, Trajectory, ENGINE_VERSION, FORMAT};
use crate::envs::EpisodeMetrics;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fs;
use std::path::Path;

pub const MANIFEST: &str = "manifest.json";

/// One raw array file of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub file: String,
    pub dtype: String,
    pub shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct EpisodeEntry {
    seed: u64,
    length: usize,
    metrics: EpisodeMetrics,
    conversion: Option<ConversionReport>,
    arrays: Vec<ArrayEntry>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    #[serde(flatten)]
    header: Header,
    episodes: Vec<EpisodeEntry>,
}

enum Data<'a> {
    F64(&'a [f64]),
    F32(&'a [f32]),
    U16(&'a [u16]),
    U64(&'a [u64]),
    U8(Vec<u8>),
}

impl Data<'_> {
    fn dtype(&self) -> &'static str {
        match self {
            Data::F64(_) => "<f8",
            Data::F32(_) => "<f4",
            Data::U16(_) => "<u2",
            Data::U64(_) => "<u8",
            Data::U8(_) => "|u1",
        }
    }

    fn bytes(&self) -> Vec<u8> {
        match self {
            Data::F64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Data::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Data::U16(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Data::U64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Data::U8(v) => v.clone(),
        }
    }
}

fn flags(v: &[bool]) -> Data<'static> {
    Data::U8(v.iter().map(|b| *b as u8).collect())
}

/// Named arrays of one episode in file order.
fn episode_arrays<'a>(h: &Header, ep: &'a Episode) -> Vec<(String, Vec<usize>, Data<'a>)> {
    let t = ep.len();
    let mut out = vec![
        ("actions".to_string(), vec![t, h.action_dim], Data::F64(&ep.actions)),
        ("reward".to_string(), vec![t], Data::F64(&ep.reward)),
        ("success".to_string(), vec![t], flags(&ep.success)),
        ("fail".to_string(), vec![t], flags(&ep.fail)),
    ];
    for (name, v, w) in ep.states.fields() {
        out.push((format!("state.{name}"), vec![ep.states.rows, w], Data::F64(v)));
    }
    out.push(("obs.state".into(), vec![t + 1, h.state_dim], Data::F64(&ep.obs_state)));
    for s in &ep.images {
        out.push((format!("{}.rgb", s.camera), vec![s.frames, s.height, s.width, 3], Data::U8(s.rgb.clone())));
        out.push((format!("{}.depth", s.camera), vec![s.frames, s.height, s.width], Data::F32(&s.depth)));
        out.push((format!("{}.seg", s.camera), vec![s.frames, s.height, s.width], Data::U16(&s.seg)));
    }
    for c in &ep.clouds {
        out.push((format!("{}.cloud_offsets", c.camera), vec![c.offsets.len()], Data::U64(&c.offsets)));
        out.push((format!("{}.cloud_points", c.camera), vec![c.points.len() / 6, 6], Data::F64(&c.points)));
    }
    if ep.conversion.is_some() {
        out.push(("residual".into(), vec![t], Data::F64(&ep.residual)));
    }
    out
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RecordError + '_ {
    move |source| RecordError::Io { path: path.display().to_string(), source }
}

impl Trajectory {
    /// Manifest plus every array as bytes, in file order.
    fn encode(&self) -> (Manifest, Vec<(String, Vec<u8>)>) {
        let mut files = Vec::new();
        let mut episodes = Vec::new();
        for (k, ep) in self.episodes.iter().enumerate() {
            let mut arrays = Vec::new();
            for (name, shape, data) in episode_arrays(&self.header, ep) {
                let file = format!("ep{k:04}.{name}.bin");
                arrays.push(ArrayEntry { name, file: file.clone(), dtype: data.dtype().into(), shape });
                files.push((file, data.bytes()));
            }
            episodes.push(EpisodeEntry { seed: ep.seed, length: ep.len(), metrics: ep.metrics, conversion: ep.conversion.clone(), arrays });
        }
        (Manifest { header: self.header.clone(), episodes }, files)
    }

    /// Writes the trajectory directory, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<(), RecordError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let (manifest, files) = self.encode();
        for (name, bytes) in files {
            let p = dir.join(name);
            fs::write(&p, bytes).map_err(io_err(&p))?;
        }
        let p = dir.join(MANIFEST);
        fs::write(&p, serde_json::to_vec_pretty(&manifest).expect("manifest serializes")).map_err(io_err(&p))
    }

    /// SHA-256 over the manifest without its timestamp and over every array.
    /// Equal digests mean the saved directories differ at most in
    /// `created_unix`.
    pub fn content_digest(&self) -> String {
        let (mut manifest, files) = self.encode();
        manifest.header.created_unix = 0;
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&manifest).expect("manifest serializes"));
        for (name, bytes) in files {
            h.update(name.as_bytes());
            h.update(bytes);
        }
        hex::encode(h.finalize())
    }

    pub fn load(dir: &Path) -> Result<Self, RecordError> {
        let mp = dir.join(MANIFEST);
        let raw = fs::read(&mp).map_err(io_err(&mp))?;
        let manifest: Manifest = serde_json::from_slice(&raw).map_err(|e| RecordError::Format { path: mp.display().to_string(), msg: e.to_string() })?;
        let h = manifest.header;
        if h.format != FORMAT {
            return Err(RecordError::Format { path: mp.display().to_string(), msg: format!("not a trajectory manifest (format `{}`)", h.format) });
        }
        if h.engine_version != ENGINE_VERSION {
            return Err(RecordError::Version { origin: mp.display().to_string(), found: h.engine_version, expected: ENGINE_VERSION.into() });
        }
        let episodes = manifest.episodes.into_iter().map(|e| read_episode(dir, &h, e)).collect::<Result<_, _>>()?;
        Ok(Trajectory { header: h, episodes })
    }
}

struct Reader<'a> {
    dir: &'a Path,
    entries: HashMap<String, ArrayEntry>,
}

impl Reader<'_> {
    fn raw(&self, name: &str, dtype: &str, width: usize) -> Result<(Vec<u8>, Vec<usize>), RecordError> {
        let bad = |path: &Path, msg: String| RecordError::Format { path: path.display().to_string(), msg };
        let e = self.entries.get(name).ok_or_else(|| bad(&self.dir.join(MANIFEST), format!("missing array `{name}`")))?;
        let p = self.dir.join(&e.file);
        if e.dtype != dtype {
            return Err(bad(&p, format!("dtype {} where {dtype} was expected", e.dtype)));
        }
        let bytes = fs::read(&p).map_err(io_err(&p))?;
        let count: usize = e.shape.iter().product();
        if bytes.len() != count * width {
            return Err(bad(&p, format!("{} bytes for shape {:?}", bytes.len(), e.shape)));
        }
        Ok((bytes, e.shape.clone()))
    }

    fn f64s(&self, name: &str) -> Result<(Vec<f64>, Vec<usize>), RecordError> {
        let (b, s) = self.raw(name, "<f8", 8)?;
        Ok((b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(), s))
    }

    fn f32s(&self, name: &str) -> Result<Vec<f32>, RecordError> {
        Ok(self.raw(name, "<f4", 4)?.0.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn u16s(&self, name: &str) -> Result<Vec<u16>, RecordError> {
        Ok(self.raw(name, "<u2", 2)?.0.chunks_exact(2).map(|c| u16::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn u64s(&self, name: &str) -> Result<Vec<u64>, RecordError> {
        Ok(self.raw(name, "<u8", 8)?.0.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn flags(&self, name: &str) -> Result<Vec<bool>, RecordError> {
        Ok(self.raw(name, "|u1", 1)?.0.iter().map(|b| *b != 0).collect())
    }
}

fn read_episode(dir: &Path, h: &Header, e: EpisodeEntry) -> Result<Episode, RecordError> {
    let r = Reader { dir, entries: e.arrays.iter().map(|a| (a.name.clone(), a.clone())).collect() };
    let (qpos, shape) = r.f64s("state.qpos")?;
    let (actor_pose, ashape) = r.f64s("state.actor_pose")?;
    let states = StateStream {
        layout_hash: h.layout_hash.clone(),
        dof_max: shape[1],
        actor_max: ashape[1] / 7,
        rows: shape[0],
        qpos,
        qvel: r.f64s("state.qvel")?.0,
        qacc: r.f64s("state.qacc")?.0,
        actor_pose,
        actor_linvel: r.f64s("state.actor_linvel")?.0,
        actor_angvel: r.f64s("state.actor_angvel")?.0,
    };
    let mut images = Vec::new();
    let mut clouds = Vec::new();
    for a in &e.arrays {
        if let Some(cam) = a.name.strip_suffix(".rgb") {
            images.push(ImageStream {
                camera: cam.into(),
                frames: a.shape[0],
                height: a.shape[1],
                width: a.shape[2],
                rgb: r.raw(&a.name, "|u1", 1)?.0,
                depth: r.f32s(&format!("{cam}.depth"))?,
                seg: r.u16s(&format!("{cam}.seg"))?,
            });
        }
        if let Some(cam) = a.name.strip_suffix(".cloud_offsets") {
            clouds.push(CloudStream { camera: cam.into(), offsets: r.u64s(&a.name)?, points: r.f64s(&format!("{cam}.cloud_points"))?.0 });
        }
    }
    Ok(Episode {
        seed: e.seed,
        actions: r.f64s("actions")?.0,
        reward: r.f64s("reward")?.0,
        success: r.flags("success")?,
        fail: r.flags("fail")?,
        states,
        obs_state: r.f64s("obs.state")?.0,
        images,
        clouds,
        metrics: e.metrics,
        residual: if e.conversion.is_some() { r.f64s("residual")?.0 } else { Vec::new() },
        conversion: e.conversion,
    })
}
