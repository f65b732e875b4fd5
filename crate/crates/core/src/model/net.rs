use rand::Rng;
use serde::{Deserialize, Serialize};

/// Shape of one per-system scalar network: `5d` augmented inputs, `hidden`
/// softplus layers of `width` units, one linear output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetArch {
    pub dim: usize,
    pub hidden: usize,
    pub width: usize,
}

/// Location of one affine layer inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerLayout {
    pub inputs: usize,
    pub outputs: usize,
    /// Offset of the row-major `outputs x inputs` weight block.
    pub weight: usize,
    /// Offset of the `outputs` biases.
    pub bias: usize,
}

pub const STABILIZER_INIT: f64 = 0.1;

/// Index of each learned stabilizer within the trailing three parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stabilizer {
    Xx = 0,
    Yy = 1,
    Xy = 2,
}

impl NetArch {
    pub fn new(dim: usize) -> Self {
        NetArch {
            dim,
            hidden: 4,
            width: 20,
        }
    }

    pub fn input_width(&self) -> usize {
        5 * self.dim
    }

    /// Number of raw differentiation inputs, `2d`.
    pub fn n_inputs(&self) -> usize {
        2 * self.dim
    }

    pub fn layers(&self) -> Vec<LayerLayout> {
        let mut out = Vec::with_capacity(self.hidden + 1);
        let mut offset = 0;
        let mut inputs = self.input_width();
        for l in 0..=self.hidden {
            let outputs = if l == self.hidden { 1 } else { self.width };
            let weight = offset;
            let bias = weight + inputs * outputs;
            offset = bias + outputs;
            out.push(LayerLayout {
                inputs,
                outputs,
                weight,
                bias,
            });
            inputs = outputs;
        }
        out
    }

    /// Offset of the three stabilizers `b_xx, b_yy, b_xy`.
    pub fn stabilizer_offset(&self) -> usize {
        let last = *self.layers().last().expect("at least one layer");
        last.bias + last.outputs
    }

    pub fn n_params(&self) -> usize {
        self.stabilizer_offset() + 3
    }

    pub fn describe(&self) -> String {
        format!(
            "mlp(in={},hidden={}x{},out=1,softplus)",
            self.input_width(),
            self.hidden,
            self.width
        )
    }
}

/// A per-system scalar network `S(x, y)` plus its three stabilizers.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarNet {
    pub arch: NetArch,
    pub params: Vec<f64>,
}

impl ScalarNet {
    /// Fan-in scaled uniform weights and biases, stabilizers at `0.1`.
    pub fn init(arch: NetArch, rng: &mut impl Rng) -> Self {
        let mut params = vec![0.0; arch.n_params()];
        for layer in arch.layers() {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for p in &mut params[layer.weight..layer.bias + layer.outputs] {
                *p = rng.random_range(-bound..bound);
            }
        }
        let s = arch.stabilizer_offset();
        params[s..s + 3].fill(STABILIZER_INIT);
        ScalarNet { arch, params }
    }

    pub fn zeros(arch: NetArch) -> Self {
        ScalarNet {
            arch,
            params: vec![0.0; arch.n_params()],
        }
    }

    pub fn stabilizer(&self, which: Stabilizer) -> f64 {
        self.params[self.arch.stabilizer_offset() + which as usize]
    }

    pub fn set_stabilizers(&mut self, xx: f64, yy: f64, xy: f64) {
        let s = self.arch.stabilizer_offset();
        self.params[s..s + 3].copy_from_slice(&[xx, yy, xy]);
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parameter_count_matches_architecture() {
        let arch = NetArch::new(1);
        // 5*20+20 + 3*(20*20+20) + 20+1 + 3 stabilizers
        assert_eq!(arch.n_params(), 120 + 1260 + 21 + 3);
        let arch2 = NetArch::new(2);
        assert_eq!(arch2.n_params(), 10 * 20 + 20 + 1260 + 21 + 3);
        let layers = arch.layers();
        assert_eq!(layers.len(), 5);
        assert_eq!(layers[4].outputs, 1);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let arch = NetArch::new(1);
        let a = ScalarNet::init(arch, &mut ChaCha8Rng::seed_from_u64(3));
        let b = ScalarNet::init(arch, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        let first = arch.layers()[0];
        let bound = 1.0 / 5f64.sqrt();
        assert!(a.params[first.weight..first.bias]
            .iter()
            .all(|w| w.abs() <= bound));
        assert_eq!(a.stabilizer(Stabilizer::Xy), STABILIZER_INIT);
        assert!(a.is_finite());
    }
}
