//! On-disk run records.
//!
//! A run directory holds:
//!
//! ```text
//! manifest.txt                  UTF-8 `key = value` lines, see below
//! config.toml                   training configuration snapshot
//! phase_000/
//!     metrics.csv               step, one loss column per system, significant
//!     eval.csv                  system, held-out ydot MSE
//!     head.f64                  EMA head: ydot row then xdot row
//!     net_<system>.f64          EMA network parameters
//!     batch_<system>.f64        analysis batch: x, y, xdot, ydot blocks
//!     terms_<system>.f64        raw terms, N x T x d
//! phase_001/ ...
//! ```
//!
//! `.f64` files are flat little-endian IEEE 754 doubles; their shapes are
//! listed in the manifest. The manifest carries the format tag, seed, term
//! catalog hash, code version, per-phase flags and shapes, and a
//! `file.<path> = <sha256>` line for every other file. Its last line,
//! `manifest.sha256`, digests everything above it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::error::{MassError, Result};
use crate::model::{FinalLayer, NetArch, ScalarNet, TermCatalog, N_TERMS};
use crate::physics::{Batch, SystemId};
use crate::train::{ActivationDump, PhaseMetrics, PhaseRecord, RunRecord, TrainConfig};

pub const FORMAT: &str = "mass-run/1";
pub const HASH_ALGORITHM: &str = "sha256";
pub const MANIFEST: &str = "manifest.txt";
const SELF_HASH_KEY: &str = "manifest.sha256";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn f64_bytes(v: &[f64]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn bytes_f64(b: &[u8], file: &str) -> Result<Vec<f64>> {
    if b.len() % 8 != 0 {
        return Err(MassError::IncompatibleRecord(format!(
            "{file} is not a whole number of doubles"
        )));
    }
    Ok(b.chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

fn phase_dir(k: usize) -> String {
    format!("phase_{k:03}")
}

/// Files of one record before they hit disk, keyed by relative path.
struct Payload {
    files: BTreeMap<String, Vec<u8>>,
    keys: Vec<(String, String)>,
}

impl Payload {
    fn key(&mut self, k: impl Into<String>, v: impl ToString) {
        self.keys.push((k.into(), v.to_string()));
    }
}

fn metrics_csv(m: &PhaseMetrics) -> String {
    let mut out = String::from("step");
    for s in &m.systems {
        write!(out, ",loss_{}", s.name()).expect("write to string");
    }
    out.push_str(",significant\n");
    for (step, losses) in m.step_loss.iter().enumerate() {
        write!(out, "{step}").expect("write to string");
        for l in losses {
            write!(out, ",{l}").expect("write to string");
        }
        match m.significant_trace.get(step) {
            Some(c) => writeln!(out, ",{c}").expect("write to string"),
            None => out.push_str(",\n"),
        }
    }
    out
}

fn eval_csv(m: &PhaseMetrics) -> String {
    let mut out = String::from("system,eval_mse\n");
    for (s, e) in m.systems.iter().zip(&m.eval_mse) {
        writeln!(out, "{},{e}", s.name()).expect("write to string");
    }
    out
}

fn build_payload(record: &RunRecord) -> Result<Payload> {
    let mut p = Payload {
        files: BTreeMap::new(),
        keys: Vec::new(),
    };
    p.key("format", FORMAT);
    p.key("hash_algorithm", HASH_ALGORITHM);
    p.key("seed", record.seed);
    p.key("catalog_hash", &record.catalog_hash);
    p.key("code_version", &record.code_version);
    p.key("phases", record.phases.len());
    let config = toml::to_string(&record.config)
        .map_err(|e| MassError::Config(format!("cannot serialize config: {e}")))?;
    p.files.insert("config.toml".into(), config.into_bytes());

    for rec in &record.phases {
        let dir = phase_dir(rec.phase);
        let pre = format!("phase.{}", rec.phase);
        let m = &rec.metrics;
        let names: Vec<&str> = m.systems.iter().map(|s| s.name()).collect();
        p.key(format!("{pre}.systems"), names.join(","));
        p.key(format!("{pre}.correct"), rec.correct);
        p.key(format!("{pre}.consistently_correct"), rec.consistently_correct);
        p.key(
            format!("{pre}.failed_at"),
            m.failed_at.map_or("none".to_string(), |s| s.to_string()),
        );
        p.key(format!("{pre}.steps"), m.step_loss.len());
        p.files.insert(format!("{dir}/metrics.csv"), metrics_csv(m).into_bytes());
        p.files.insert(format!("{dir}/eval.csv"), eval_csv(m).into_bytes());
        p.key(format!("{pre}.head.shape"), format!("2x{N_TERMS}"));
        p.files.insert(format!("{dir}/head.f64"), f64_bytes(&rec.head.to_flat()));
        for (sys, net) in m.systems.iter().zip(&rec.nets) {
            let a = net.arch;
            p.key(
                format!("{pre}.net.{}.arch", sys.name()),
                format!("{},{},{}", a.dim, a.hidden, a.width),
            );
            p.key(format!("{pre}.net.{}.shape", sys.name()), net.params.len());
            p.files
                .insert(format!("{dir}/net_{}.f64", sys.name()), f64_bytes(&net.params));
        }
        for dump in &rec.dumps {
            let b = &dump.batch;
            let name = dump.system.name();
            p.key(format!("{pre}.batch.{name}.shape"), format!("4x{}x{}", b.len(), b.dim));
            let mut flat = Vec::with_capacity(4 * b.x.len());
            for part in [&b.x, &b.y, &b.xdot, &b.ydot] {
                flat.extend_from_slice(part);
            }
            p.files.insert(format!("{dir}/batch_{name}.f64"), f64_bytes(&flat));
            p.key(
                format!("{pre}.terms.{name}.shape"),
                format!("{}x{N_TERMS}x{}", b.len(), b.dim),
            );
            p.files
                .insert(format!("{dir}/terms_{name}.f64"), f64_bytes(&dump.terms));
        }
    }
    Ok(p)
}

fn manifest_text(p: &Payload) -> String {
    let mut out = String::new();
    for (k, v) in &p.keys {
        writeln!(out, "{k} = {v}").expect("write to string");
    }
    for (path, bytes) in &p.files {
        writeln!(out, "file.{path} = {}", sha256_hex(bytes)).expect("write to string");
    }
    let digest = sha256_hex(out.as_bytes());
    writeln!(out, "{SELF_HASH_KEY} = {digest}").expect("write to string");
    out
}

/// Writes `dir`'s content to a temporary sibling and renames it into
/// place, replacing any previous directory there.
fn write_atomically(dir: &Path, files: &BTreeMap<String, Vec<u8>>) -> Result<()> {
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(|e| MassError::io(&parent, e))?;
    let name = dir
        .file_name()
        .ok_or_else(|| MassError::Config(format!("{} has no directory name", dir.display())))?
        .to_string_lossy()
        .to_string();
    let nonce = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    let tmp = parent.join(format!(".{name}.tmp-{}-{nonce}", std::process::id()));
    let result = (|| {
        for (rel, bytes) in files {
            let path = tmp.join(rel);
            if let Some(p) = path.parent() {
                fs::create_dir_all(p).map_err(|e| MassError::io(p, e))?;
            }
            fs::write(&path, bytes).map_err(|e| MassError::io(&path, e))?;
        }
        if dir.exists() {
            let old = parent.join(format!(".{name}.old-{}-{nonce}", std::process::id()));
            fs::rename(dir, &old).map_err(|e| MassError::io(dir, e))?;
            fs::rename(&tmp, dir).map_err(|e| MassError::io(dir, e))?;
            fs::remove_dir_all(&old).map_err(|e| MassError::io(&old, e))?;
        } else {
            fs::rename(&tmp, dir).map_err(|e| MassError::io(dir, e))?;
        }
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_dir_all(&tmp);
    }
    result
}

/// Saves `record` as the directory `dir` and returns its path.
pub fn save_run(record: &RunRecord, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let mut payload = build_payload(record)?;
    let manifest = manifest_text(&payload);
    payload.files.insert(MANIFEST.into(), manifest.into_bytes());
    write_atomically(dir, &payload.files)?;
    Ok(dir.to_path_buf())
}

/// Digest of a saved run's manifest.
pub fn manifest_hash(dir: impl AsRef<Path>) -> Result<String> {
    let path = dir.as_ref().join(MANIFEST);
    let bytes = fs::read(&path).map_err(|e| MassError::io(&path, e))?;
    Ok(sha256_hex(&bytes))
}

struct Manifest {
    map: BTreeMap<String, String>,
}

impl Manifest {
    fn parse(text: &str, dir: &Path) -> Result<Manifest> {
        let mut map = BTreeMap::new();
        let mut body_len = 0;
        let mut self_hash = None;
        for line in text.split_inclusive('\n') {
            let trimmed = line.trim_end_matches('\n');
            if trimmed.is_empty() {
                body_len += line.len();
                continue;
            }
            let (k, v) = trimmed
                .split_once(" = ")
                .ok_or_else(|| MassError::NotARunRecord(dir.to_path_buf()))?;
            if k == SELF_HASH_KEY {
                self_hash = Some(v.to_string());
                break;
            }
            body_len += line.len();
            map.insert(k.to_string(), v.to_string());
        }
        match self_hash {
            Some(h) if h == sha256_hex(&text.as_bytes()[..body_len]) => Ok(Manifest { map }),
            _ => Err(MassError::HashMismatch {
                file: MANIFEST.into(),
            }),
        }
    }

    fn get(&self, key: &str) -> Result<&str> {
        self.map
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| MassError::IncompatibleRecord(format!("manifest lacks `{key}`")))
    }

    fn parse_as<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.parse()
            .map_err(|_| MassError::IncompatibleRecord(format!("bad value `{v}` for `{key}`")))
    }
}

struct Reader<'a> {
    dir: &'a Path,
    manifest: &'a Manifest,
}

impl Reader<'_> {
    fn read(&self, rel: &str, phase: usize) -> Result<Vec<u8>> {
        let expected = self.manifest.get(&format!("file.{rel}")).map_err(|_| {
            MassError::MissingArtifact {
                phase,
                artifact: rel.to_string(),
            }
        })?;
        let path = self.dir.join(rel);
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => MassError::MissingArtifact {
                phase,
                artifact: rel.to_string(),
            },
            _ => MassError::io(&path, e),
        })?;
        if sha256_hex(&bytes) != expected {
            return Err(MassError::HashMismatch { file: rel.to_string() });
        }
        Ok(bytes)
    }

    fn read_f64(&self, rel: &str, phase: usize, len: usize) -> Result<Vec<f64>> {
        let v = bytes_f64(&self.read(rel, phase)?, rel)?;
        if v.len() != len {
            return Err(MassError::IncompatibleRecord(format!(
                "{rel} holds {} values, manifest implies {len}",
                v.len()
            )));
        }
        Ok(v)
    }

    fn read_text(&self, rel: &str, phase: usize) -> Result<String> {
        String::from_utf8(self.read(rel, phase)?)
            .map_err(|_| MassError::IncompatibleRecord(format!("{rel} is not UTF-8")))
    }
}

fn bad(file: &str, what: &str) -> MassError {
    MassError::IncompatibleRecord(format!("{file}: {what}"))
}

fn parse_float(s: &str, file: &str) -> Result<f64> {
    s.parse().map_err(|_| bad(file, &format!("bad number `{s}`")))
}

/// `(step_loss, significant_trace)` from `metrics.csv`.
fn parse_metrics(text: &str, systems: usize, file: &str) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad(file, "empty"))?;
    if header.split(',').count() != systems + 2 {
        return Err(bad(file, "header does not match the phase's systems"));
    }
    let mut losses = Vec::new();
    let mut trace = Vec::new();
    for (i, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != systems + 2 || cols[0] != i.to_string() {
            return Err(bad(file, &format!("malformed row {i}")));
        }
        losses.push(
            cols[1..=systems]
                .iter()
                .map(|c| parse_float(c, file))
                .collect::<Result<Vec<_>>>()?,
        );
        let sig = cols[systems + 1];
        if !sig.is_empty() {
            if trace.len() != i {
                return Err(bad(file, "gap in the significant trace"));
            }
            trace.push(sig.parse().map_err(|_| bad(file, "bad significant count"))?);
        }
    }
    Ok((losses, trace))
}

fn parse_eval(text: &str, systems: &[SystemId], file: &str) -> Result<Vec<f64>> {
    let rows: Vec<&str> = text.lines().skip(1).collect();
    if rows.len() != systems.len() {
        return Err(bad(file, "row count does not match the phase's systems"));
    }
    rows.iter()
        .zip(systems)
        .map(|(row, sys)| {
            let (name, v) = row.split_once(',').ok_or_else(|| bad(file, "malformed row"))?;
            if name != sys.name() {
                return Err(bad(file, &format!("expected {sys}, found {name}")));
            }
            parse_float(v, file)
        })
        .collect()
}

fn parse_arch(s: &str, key: &str) -> Result<NetArch> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad(key, "bad architecture"))?;
    match v[..] {
        [dim, hidden, width] => Ok(NetArch { dim, hidden, width }),
        _ => Err(bad(key, "bad architecture")),
    }
}

fn parse_shape(s: &str, key: &str) -> Result<Vec<usize>> {
    s.split('x')
        .map(|p| p.parse().map_err(|_| bad(key, "bad shape")))
        .collect()
}

/// Loads and validates the run saved at `dir`.
pub fn load_run(dir: impl AsRef<Path>) -> Result<RunRecord> {
    let dir = dir.as_ref();
    let mpath = dir.join(MANIFEST);
    if !mpath.is_file() {
        return Err(MassError::NotARunRecord(dir.to_path_buf()));
    }
    let text = fs::read_to_string(&mpath).map_err(|e| MassError::io(&mpath, e))?;
    let manifest = Manifest::parse(&text, dir)?;
    let format = manifest.get("format").map_err(|_| MassError::NotARunRecord(dir.to_path_buf()))?;
    if format != FORMAT {
        return Err(MassError::IncompatibleRecord(format!(
            "format `{format}`, this build reads `{FORMAT}`"
        )));
    }
    let algo = manifest.get("hash_algorithm")?;
    if algo != HASH_ALGORITHM {
        return Err(MassError::IncompatibleRecord(format!("hash algorithm `{algo}`")));
    }
    let catalog_hash = manifest.get("catalog_hash")?.to_string();
    if catalog_hash != TermCatalog::standard().hash() {
        return Err(MassError::IncompatibleRecord(
            "term catalog differs from this build's".into(),
        ));
    }
    let code_version = manifest.get("code_version")?.to_string();
    if code_version != crate::CODE_VERSION {
        return Err(MassError::IncompatibleRecord(format!(
            "written by `{code_version}`, this is `{}`",
            crate::CODE_VERSION
        )));
    }
    let reader = Reader {
        dir,
        manifest: &manifest,
    };
    let config_text = reader.read_text("config.toml", 0)?;
    let config: TrainConfig = toml::from_str(&config_text)
        .map_err(|e| MassError::IncompatibleRecord(format!("config.toml: {e}")))?;
    let seed: u64 = manifest.parse_as("seed")?;
    let n_phases: usize = manifest.parse_as("phases")?;

    let mut phases = Vec::with_capacity(n_phases);
    for k in 0..n_phases {
        let d = phase_dir(k);
        if !dir.join(&d).is_dir() {
            return Err(MassError::MissingArtifact {
                phase: k,
                artifact: d,
            });
        }
        let pre = format!("phase.{k}");
        let systems: Vec<SystemId> = manifest
            .get(&format!("{pre}.systems"))?
            .split(',')
            .map(|s| s.parse())
            .collect::<Result<_>>()?;
        let failed_at = match manifest.get(&format!("{pre}.failed_at"))? {
            "none" => None,
            s => Some(s.parse().map_err(|_| bad(&pre, "bad failed_at"))?),
        };
        let metrics_file = format!("{d}/metrics.csv");
        let (step_loss, significant_trace) =
            parse_metrics(&reader.read_text(&metrics_file, k)?, systems.len(), &metrics_file)?;
        let eval_file = format!("{d}/eval.csv");
        let eval_mse = parse_eval(&reader.read_text(&eval_file, k)?, &systems, &eval_file)?;
        let head = FinalLayer::from_flat(&reader.read_f64(&format!("{d}/head.f64"), k, 2 * N_TERMS)?)?;
        let mut nets = Vec::with_capacity(systems.len());
        let mut dumps = Vec::with_capacity(systems.len());
        for sys in &systems {
            let name = sys.name();
            let akey = format!("{pre}.net.{name}.arch");
            let arch = parse_arch(manifest.get(&akey).map_err(|_| MassError::MissingArtifact {
                phase: k,
                artifact: format!("network for {name}"),
            })?, &akey)?;
            let params = reader.read_f64(&format!("{d}/net_{name}.f64"), k, arch.n_params())?;
            nets.push(ScalarNet { arch, params });

            let bkey = format!("{pre}.batch.{name}.shape");
            let shape = parse_shape(manifest.get(&bkey).map_err(|_| MassError::MissingArtifact {
                phase: k,
                artifact: format!("activation dump for {name}"),
            })?, &bkey)?;
            let [4, n, dim] = shape[..] else {
                return Err(bad(&bkey, "bad shape"));
            };
            let flat = reader.read_f64(&format!("{d}/batch_{name}.f64"), k, 4 * n * dim)?;
            let block = n * dim;
            let batch = Batch {
                dim,
                x: flat[..block].to_vec(),
                y: flat[block..2 * block].to_vec(),
                xdot: flat[2 * block..3 * block].to_vec(),
                ydot: flat[3 * block..].to_vec(),
            };
            let terms = reader.read_f64(&format!("{d}/terms_{name}.f64"), k, n * N_TERMS * dim)?;
            dumps.push(ActivationDump {
                system: *sys,
                batch,
                terms,
            });
        }
        phases.push(PhaseRecord {
            phase: k,
            metrics: PhaseMetrics {
                systems,
                step_loss,
                significant_trace,
                eval_mse,
                failed_at,
                wall_clock: 0.0,
            },
            correct: manifest.parse_as(&format!("{pre}.correct"))?,
            consistently_correct: manifest.parse_as(&format!("{pre}.consistently_correct"))?,
            nets,
            head,
            dumps,
        });
    }
    Ok(RunRecord {
        config,
        seed,
        catalog_hash,
        code_version,
        phases,
    })
}

/// Directory name of a seed's run inside a sweep.
pub fn run_dir_name(seed: u64) -> String {
    format!("seed_{seed:06}")
}

/// Run directories of a sweep, ordered by seed.
pub fn list_runs(sweep_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = sweep_dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| MassError::io(dir, e))?;
    let mut runs: Vec<(u64, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| MassError::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().to_string();
        if let Some(seed) = name.strip_prefix("seed_").and_then(|s| s.parse().ok()) {
            if entry.path().join(MANIFEST).is_file() {
                runs.push((seed, entry.path()));
            }
        }
    }
    runs.sort();
    Ok(runs.into_iter().map(|r| r.1).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_round_trip_with_failure() {
        let m = PhaseMetrics {
            systems: vec![SystemId::Sho, SystemId::Kepler],
            step_loss: vec![vec![0.1, 1e-300], vec![f64::NAN, 2.5]],
            significant_trace: vec![7],
            eval_mse: vec![f64::INFINITY, 3e-4],
            failed_at: Some(1),
            wall_clock: 1.0,
        };
        let (loss, trace) = parse_metrics(&metrics_csv(&m), 2, "m").unwrap();
        assert_eq!(trace, vec![7]);
        assert_eq!(loss[0], vec![0.1, 1e-300]);
        assert!(loss[1][0].is_nan());
        let e = parse_eval(&eval_csv(&m), &m.systems, "e").unwrap();
        assert_eq!(e, vec![f64::INFINITY, 3e-4]);
    }

    #[test]
    fn doubles_round_trip() {
        let v = vec![1.0, -0.0, f64::MIN_POSITIVE, 1e308];
        assert_eq!(bytes_f64(&f64_bytes(&v), "x").unwrap(), v);
        assert!(bytes_f64(&[0; 7], "x").is_err());
    }
}
