//! Plain-text serialization of trained nets.
//!
//! ```text
//! nne-net 1
//! scalar f64
//! input_dim <d>
//! hidden_units <h>
//! activation relu|sigmoid
//! head point|diag|full
//! output_dim <p>
//! input_mean <d values>
//! input_sd <d values>
//! target_shift <p values>
//! target_scale <p values>
//! weights <count>
//! <weights, whitespace separated, any number of lines>
//! train_loss <x>
//! validation_loss <x>
//! epochs <n>
//! best_epoch <n>
//! n_train <n>
//! n_validation <n>
//! seed <stream>
//! end
//! ```
//!
//! Numbers are written in shortest round-trip exponential notation, so
//! reading a written net reproduces it bit for bit. Lines starting with `#`
//! are comments.

use std::fmt::Write as _;
use std::str::FromStr;

use super::{NetConfig, OutputScaling, ShallowNet, TrainedNet, TrainingMeta};
use crate::error::{NneError, Result};
use crate::scalar::Real;

const MAGIC: &str = "nne-net 1";
const WEIGHTS_PER_LINE: usize = 8;

fn join<T: Real>(values: &[T]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{v:e}").unwrap();
    }
    s
}

pub fn write_trained_net<T: Real>(net: &TrainedNet<T>) -> String {
    let n = &net.net;
    let c = n.config();
    let m = &net.meta;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "scalar {}", T::type_name());
    let _ = writeln!(out, "input_dim {}", c.input_dim);
    let _ = writeln!(out, "hidden_units {}", c.hidden_units);
    let _ = writeln!(out, "activation {}", c.activation.name());
    let _ = writeln!(out, "head {}", c.head.name());
    let _ = writeln!(out, "output_dim {}", c.output_dim);
    let _ = writeln!(out, "input_mean {}", join(n.input_mean()));
    let _ = writeln!(out, "input_sd {}", join(n.input_sd()));
    let _ = writeln!(out, "target_shift {}", join(&n.output_scaling().shift));
    let _ = writeln!(out, "target_scale {}", join(&n.output_scaling().scale));
    let _ = writeln!(out, "weights {}", n.params().len());
    for chunk in n.params().chunks(WEIGHTS_PER_LINE) {
        let _ = writeln!(out, "{}", join(chunk));
    }
    let _ = writeln!(out, "train_loss {:e}", m.train_loss);
    let _ = writeln!(out, "validation_loss {:e}", m.validation_loss);
    let _ = writeln!(out, "epochs {}", m.epochs);
    let _ = writeln!(out, "best_epoch {}", m.best_epoch);
    let _ = writeln!(out, "n_train {}", m.n_train);
    let _ = writeln!(out, "n_validation {}", m.n_validation);
    let _ = writeln!(out, "seed {}", m.seed);
    let _ = writeln!(out, "end");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<&'a str> {
        for (i, l) in self.inner.by_ref() {
            let l = l.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            self.line = i + 1;
            return Ok(l);
        }
        Err(NneError::Parse {
            line: self.line + 1,
            reason: "unexpected end of input".into(),
        })
    }

    fn err(&self, reason: impl Into<String>) -> NneError {
        NneError::Parse {
            line: self.line,
            reason: reason.into(),
        }
    }

    /// Value part of a `key value...` line.
    fn field(&mut self, key: &str) -> Result<&'a str> {
        let l = self.next_line()?;
        match l.split_once(char::is_whitespace) {
            Some((k, v)) if k == key => Ok(v.trim()),
            None if l == key => Ok(""),
            _ => Err(self.err(format!("expected field {key:?}"))),
        }
    }

    fn parsed<V: FromStr>(&mut self, key: &str) -> Result<V> {
        let v = self.field(key)?;
        v.parse().map_err(|_| self.err(format!("bad value {v:?} for {key}")))
    }

    fn vector<T: Real>(&mut self, key: &str, len: usize) -> Result<Vec<T>> {
        let v = self.field(key)?;
        let out = parse_values::<T>(v).map_err(|r| self.err(format!("{key}: {r}")))?;
        if out.len() != len {
            return Err(self.err(format!("{key}: expected {len} values, got {}", out.len())));
        }
        Ok(out)
    }
}

fn parse_values<T: Real>(s: &str) -> std::result::Result<Vec<T>, String> {
    s.split_whitespace()
        .map(|t| t.parse::<T>().map_err(|_| format!("bad number {t:?}")))
        .collect()
}

pub fn read_trained_net<T: Real>(text: &str) -> Result<TrainedNet<T>> {
    let mut ls = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    if ls.next_line()? != MAGIC {
        return Err(ls.err(format!("expected header {MAGIC:?}")));
    }
    let scalar = ls.field("scalar")?;
    if scalar != T::type_name() {
        return Err(ls.err(format!("file holds {scalar} weights, reader expects {}", T::type_name())));
    }
    let input_dim: usize = ls.parsed("input_dim")?;
    let hidden_units: usize = ls.parsed("hidden_units")?;
    let activation = ls.parsed("activation")?;
    let head = ls.parsed("head")?;
    let output_dim: usize = ls.parsed("output_dim")?;
    let config = NetConfig {
        input_dim,
        hidden_units,
        activation,
        head,
        output_dim,
    };
    config.validate().map_err(|e| ls.err(e.to_string()))?;
    let input_mean = ls.vector("input_mean", input_dim)?;
    let input_sd = ls.vector("input_sd", input_dim)?;
    let shift = ls.vector("target_shift", output_dim)?;
    let scale = ls.vector("target_scale", output_dim)?;
    let count: usize = ls.parsed("weights")?;
    if count != config.n_params() {
        return Err(ls.err(format!("expected {} weights for this architecture, header says {count}", config.n_params())));
    }
    let mut params = Vec::with_capacity(count);
    while params.len() < count {
        let l = ls.next_line()?;
        params.extend(parse_values::<T>(l).map_err(|r| ls.err(r))?);
    }
    if params.len() != count {
        return Err(ls.err("weight block longer than declared"));
    }
    let meta = TrainingMeta {
        train_loss: ls.parsed("train_loss")?,
        validation_loss: ls.parsed("validation_loss")?,
        epochs: ls.parsed("epochs")?,
        best_epoch: ls.parsed("best_epoch")?,
        n_train: ls.parsed("n_train")?,
        n_validation: ls.parsed("n_validation")?,
        seed: ls.field("seed")?.to_string(),
    };
    if ls.next_line()? != "end" {
        return Err(ls.err("expected end"));
    }
    let net = ShallowNet::from_parts(config, params, input_mean, input_sd, OutputScaling { shift, scale })
        .map_err(|e| ls.err(e.to_string()))?;
    Ok(TrainedNet { net, meta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Activation, OutputHead};
    use rand::Rng;

    fn random_net<T: Real>(head: OutputHead) -> TrainedNet<T> {
        let cfg = NetConfig::new(3, 5, 2, head).with_activation(Activation::Sigmoid);
        let mut rng = crate::rng::RngStream::new(4).rng();
        let mut g = |s: f64| T::c(rng.random_range(-s..s) * 1e3_f64.powf(rng.random_range(-3.0..3.0)));
        let params = (0..cfg.n_params()).map(|_| g(1.0)).collect();
        let net = ShallowNet::from_parts(
            cfg,
            params,
            vec![g(1.0), g(1.0), g(1.0)],
            vec![T::c(0.3), T::c(1e-7), T::one()],
            OutputScaling {
                shift: vec![g(1.0), g(1.0)],
                scale: vec![T::c(0.1), T::c(7.0)],
            },
        )
        .unwrap();
        TrainedNet {
            net,
            meta: TrainingMeta {
                train_loss: -1.234_567_890_123e-3,
                validation_loss: 0.1,
                epochs: 77,
                best_epoch: 52,
                n_train: 900,
                n_validation: 100,
                seed: "7:1.2".into(),
            },
        }
    }

    #[test]
    fn round_trip_is_exact() {
        for head in [OutputHead::Point, OutputHead::DiagVar, OutputHead::FullCov] {
            let net = random_net::<f64>(head);
            let back: TrainedNet<f64> = read_trained_net(&write_trained_net(&net)).unwrap();
            assert_eq!(back, net);
            let net32 = random_net::<f32>(head);
            assert_eq!(read_trained_net::<f32>(&write_trained_net(&net32)).unwrap(), net32);
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = write_trained_net(&random_net::<f64>(OutputHead::Point));
        let broken = text.replacen("hidden_units 5", "hidden_units five", 1);
        match read_trained_net::<f64>(&broken) {
            Err(NneError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_trained_net::<f32>(&text).is_err());
        let truncated: String = text.lines().take(14).collect::<Vec<_>>().join("\n");
        assert!(read_trained_net::<f64>(&truncated).is_err());
    }
}
