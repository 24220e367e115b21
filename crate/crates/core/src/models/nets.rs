//! Policy and loss heads over the shared MLP body, with CSV checkpoints.

use crate::dataset::format_real;
use crate::error::Error;
use crate::models::Mlp;
use crate::seeding::{self};
use crate::types::{ActionDistribution, Context, StochasticPolicy};
use crate::Result;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// Default hidden architecture: two layers of 32 tanh units.
pub const DEFAULT_HIDDEN: [usize; 2] = [32, 32];

/// Internal purpose tag for network initialization streams.
const INIT_TAG: u64 = 0x4E45_5453; // "NETS"

/// Numerically stable softmax over three scores.
pub(crate) fn softmax3(scores: [f64; 3]) -> [f64; 3] {
    let max = scores[0].max(scores[1]).max(scores[2]);
    let exps = scores.map(|s| (s - max).exp());
    let sum: f64 = exps.iter().sum();
    exps.map(|e| e / sum)
}

fn context_net(hidden: &[usize], seed: Option<u64>) -> Result<Mlp> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(2);
    sizes.extend_from_slice(hidden);
    sizes.push(3);
    match seed {
        Some(seed) => {
            let mut rng = seeding::rng(seed, INIT_TAG);
            Mlp::init(&sizes, &mut rng)
        }
        None => Mlp::zeros(&sizes),
    }
}

/// Stochastic tilt policy: an MLP from the two alarm levels to three action
/// scores, turned into probabilities by softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    mlp: Mlp,
    init_seed: Option<u64>,
}

impl PolicyNet {
    /// Randomly initialized policy (seeded, reproducible).
    pub fn new(hidden: &[usize], seed: u64) -> Result<PolicyNet> {
        Ok(PolicyNet {
            mlp: context_net(hidden, Some(seed))?,
            init_seed: Some(seed),
        })
    }

    /// All-zero policy; outputs the uniform distribution everywhere.
    pub fn zeros(hidden: &[usize]) -> Result<PolicyNet> {
        Ok(PolicyNet {
            mlp: context_net(hidden, None)?,
            init_seed: None,
        })
    }

    /// Raw action scores before softmax.
    pub fn logits(&self, x: &Context) -> [f64; 3] {
        let out = self.mlp.forward(&x.features());
        [out[0], out[1], out[2]]
    }

    /// Action probabilities at `x`.
    pub fn probabilities(&self, x: &Context) -> ActionDistribution {
        ActionDistribution::new(softmax3(self.logits(x)))
            .expect("softmax output is a valid simplex")
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn init_seed(&self) -> Option<u64> {
        self.init_seed
    }
}

impl StochasticPolicy for PolicyNet {
    fn action_probabilities(&self, x: &Context) -> ActionDistribution {
        self.probabilities(x)
    }
}

/// Per-action loss model: an MLP from the two alarm levels to one predicted
/// loss per action, read directly from the linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LossNet {
    mlp: Mlp,
    init_seed: Option<u64>,
}

impl LossNet {
    /// Randomly initialized loss model (seeded, reproducible).
    pub fn new(hidden: &[usize], seed: u64) -> Result<LossNet> {
        Ok(LossNet {
            mlp: context_net(hidden, Some(seed))?,
            init_seed: Some(seed),
        })
    }

    /// All-zero loss model; predicts zero loss everywhere.
    pub fn zeros(hidden: &[usize]) -> Result<LossNet> {
        Ok(LossNet {
            mlp: context_net(hidden, None)?,
            init_seed: None,
        })
    }

    /// Predicted loss per action at `x`, in canonical action order.
    pub fn predictions(&self, x: &Context) -> [f64; 3] {
        let out = self.mlp.forward(&x.features());
        [out[0], out[1], out[2]]
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn init_seed(&self) -> Option<u64> {
        self.init_seed
    }
}

fn save_net(mlp: &Mlp, kind: &str, init_seed: Option<u64>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let layers: Vec<String> = mlp.sizes().iter().map(|s| s.to_string()).collect();
    let seed = init_seed.map_or_else(|| "none".to_string(), |s| s.to_string());
    writeln!(
        w,
        "kind={kind},layers={},activation=tanh,seed={seed}",
        layers.join("-")
    )
    .and_then(|_| {
        for p in mlp.params() {
            writeln!(w, "{}", format_real(*p))?;
        }
        w.flush()
    })
    .map_err(|e| Error::io(path.display().to_string(), e))
}

fn load_net(path: &Path, expected_kind: &str) -> Result<(Mlp, Option<u64>)> {
    let path_str = path.display().to_string();
    let bad = |msg: String| Error::BadCheckpoint {
        path: path_str.clone(),
        message: msg,
    };
    let file = File::open(path).map_err(|e| Error::io(path_str.clone(), e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| bad("empty file".into()))?
        .map_err(|e| Error::io(path_str.clone(), e))?;

    let mut kind = None;
    let mut layers: Option<Vec<usize>> = None;
    let mut activation = None;
    let mut seed: Option<Option<u64>> = None;
    for field in header.trim_end_matches('\r').split(',') {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed metadata field `{field}`")))?;
        match key {
            "kind" => kind = Some(value.to_string()),
            "activation" => activation = Some(value.to_string()),
            "layers" => {
                let parsed: std::result::Result<Vec<usize>, _> =
                    value.split('-').map(str::parse).collect();
                layers = Some(parsed.map_err(|_| bad(format!("bad layer list `{value}`")))?);
            }
            "seed" => {
                seed = Some(if value == "none" {
                    None
                } else {
                    Some(
                        value
                            .parse()
                            .map_err(|_| bad(format!("bad seed `{value}`")))?,
                    )
                });
            }
            other => return Err(bad(format!("unknown metadata key `{other}`"))),
        }
    }
    let kind = kind.ok_or_else(|| bad("missing kind".into()))?;
    if kind != expected_kind {
        return Err(bad(format!(
            "expected a {expected_kind} checkpoint, found `{kind}`"
        )));
    }
    let activation = activation.ok_or_else(|| bad("missing activation".into()))?;
    if activation != "tanh" {
        return Err(bad(format!("unsupported activation `{activation}`")));
    }
    let layers = layers.ok_or_else(|| bad("missing layers".into()))?;
    if layers.first() != Some(&2) || layers.last() != Some(&3) {
        return Err(bad(format!(
            "layers {layers:?} must map 2 inputs to 3 outputs"
        )));
    }
    let seed = seed.ok_or_else(|| bad("missing seed".into()))?;

    let mut params = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path_str.clone(), e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| bad(format!("parameter line {}: not a real: `{line}`", i + 2)))?;
        if !v.is_finite() {
            return Err(bad(format!("parameter line {}: non-finite value", i + 2)));
        }
        params.push(v);
    }
    let expected = Mlp::param_count_for(&layers);
    if params.len() != expected {
        return Err(bad(format!(
            "expected {expected} parameters for layers {layers:?}, found {}",
            params.len()
        )));
    }
    let mut mlp = Mlp::zeros(&layers)?;
    mlp.set_params(&params)?;
    Ok((mlp, seed))
}

/// Writes a policy checkpoint: a metadata line (kind, layer sizes,
/// activation, init seed) followed by one parameter per line at nine
/// significant digits.
pub fn save_policy_net(net: &PolicyNet, path: impl AsRef<Path>) -> Result<()> {
    save_net(&net.mlp, "policy", net.init_seed, path.as_ref())
}

/// Reads a policy checkpoint written by [`save_policy_net`].
pub fn load_policy_net(path: impl AsRef<Path>) -> Result<PolicyNet> {
    let (mlp, init_seed) = load_net(path.as_ref(), "policy")?;
    Ok(PolicyNet { mlp, init_seed })
}

/// Writes a loss-model checkpoint (same layout as policy checkpoints).
pub fn save_loss_net(net: &LossNet, path: impl AsRef<Path>) -> Result<()> {
    save_net(&net.mlp, "loss", net.init_seed, path.as_ref())
}

/// Reads a loss-model checkpoint written by [`save_loss_net`].
pub fn load_loss_net(path: impl AsRef<Path>) -> Result<LossNet> {
    let (mlp, init_seed) = load_net(path.as_ref(), "loss")?;
    Ok(LossNet { mlp, init_seed })
}
