use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mass_core::store::sha256_hex;

pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Short stable tag of a seed set, used in cross-seed file names.
pub fn seed_set_tag(seeds: &[u64]) -> String {
    let mut s: Vec<u64> = seeds.to_vec();
    s.sort_unstable();
    let joined: Vec<String> = s.iter().map(u64::to_string).collect();
    sha256_hex(joined.join(",").as_bytes())[..8].to_string()
}

/// Every `stride`-th index so at most `max` points remain (last one kept).
pub fn thin(len: usize, max: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    let stride = len.div_ceil(max.max(1));
    let mut idx: Vec<usize> = (0..len).step_by(stride).collect();
    if *idx.last().expect("nonempty") != len - 1 {
        idx.push(len - 1);
    }
    idx
}

pub struct Outputs {
    pub dir: PathBuf,
    pub plots: bool,
    pub written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(dir: PathBuf, plots: bool) -> Self {
        Outputs {
            dir,
            plots,
            written: Vec::new(),
        }
    }

    pub fn csv(&mut self, name: &str, contents: &str) -> Result<()> {
        let p = self.dir.join(format!("{name}.csv"));
        write(&p, contents)?;
        self.written.push(p);
        Ok(())
    }

    /// SVGs are built lazily so `--no-plots` skips the work.
    pub fn svg(&mut self, name: &str, build: impl FnOnce() -> String) -> Result<()> {
        if !self.plots {
            return Ok(());
        }
        let p = self.dir.join(format!("{name}.svg"));
        write(&p, &build())?;
        self.written.push(p);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thinning_keeps_ends() {
        assert_eq!(thin(10, 4), vec![0, 3, 6, 9]);
        assert_eq!(thin(3, 10), vec![0, 1, 2]);
        assert_eq!(thin(11, 5), vec![0, 3, 6, 9, 10]);
        assert!(thin(0, 5).is_empty());
    }

    #[test]
    fn tag_ignores_order() {
        assert_eq!(seed_set_tag(&[3, 1, 2]), seed_set_tag(&[1, 2, 3]));
        assert_ne!(seed_set_tag(&[1, 2]), seed_set_tag(&[1, 2, 3]));
    }
}
