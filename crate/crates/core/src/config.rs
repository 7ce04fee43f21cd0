//! Line-based architecture description format.
//!
//! ```text
//! # comment
//! input 224 224 3
//! conv 32 3 3 valid relu        # conv F KH KW PAD ACT [STRIDE]
//! maxpool 2 2                   # maxpool H W [STRIDE]
//! batchnorm                     # accounting only
//! flatten
//! dense 64 relu                 # dense U ACT
//! dense 8 softmax
//! ```
//!
//! Shapes are propagated eagerly; the last layer must be `dense ... softmax`
//! and softmax may appear nowhere else.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::layers::{param_count, Activation, LayerSpec, Padding, ParamReport};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    /// `[H, W, C]`.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

/// Configs shipped with the engine, addressable by file name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("gournet.cfg", include_str!("../configs/gournet.cfg")),
    ("vgg16-8.cfg", include_str!("../configs/vgg16-8.cfg")),
    (
        "alexnet-bn-8.cfg",
        include_str!("../configs/alexnet-bn-8.cfg"),
    ),
    ("desk-64.cfg", include_str!("../configs/desk-64.cfg")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

fn number(tok: &str, line: usize, what: &str) -> Result<usize> {
    tok.parse::<usize>()
        .ok()
        .filter(|&v| v >= 1)
        .ok_or_else(|| {
            Error::config(
                line,
                format!("{what} must be a positive integer, got '{tok}'"),
            )
        })
}

fn activation(tok: &str, line: usize) -> Result<Activation> {
    match tok {
        "relu" => Ok(Activation::Relu),
        "softmax" => Ok(Activation::Softmax),
        "none" | "linear" => Ok(Activation::None),
        other => Err(Error::config(line, format!("unknown activation '{other}'"))),
    }
}

fn padding(tok: &str, line: usize) -> Result<Padding> {
    match tok {
        "same" => Ok(Padding::Same),
        "valid" => Ok(Padding::Valid),
        other => Err(Error::config(line, format!("unknown padding '{other}'"))),
    }
}

fn arity(toks: &[&str], allowed: &[usize], line: usize, usage: &str) -> Result<()> {
    if allowed.contains(&(toks.len() - 1)) {
        Ok(())
    } else {
        Err(Error::config(line, format!("expected `{usage}`")))
    }
}

pub fn parse_config(text: &str) -> Result<ModelConfig> {
    let mut input: Option<Vec<usize>> = None;
    let mut layers = Vec::new();
    let mut lines = Vec::new();
    let mut last_line = 1;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        last_line = line;
        let toks: Vec<&str> = content.split_whitespace().collect();
        if input.is_none() && toks[0] != "input" {
            return Err(Error::config(
                line,
                "the first statement must be `input H W C`",
            ));
        }
        let spec = match toks[0] {
            "input" => {
                if input.is_some() {
                    return Err(Error::config(line, "duplicate `input` statement"));
                }
                arity(&toks, &[3], line, "input H W C")?;
                let dims = toks[1..]
                    .iter()
                    .map(|t| number(t, line, "input dimension"))
                    .collect::<Result<Vec<_>>>()?;
                input = Some(dims);
                continue;
            }
            "conv" => {
                arity(&toks, &[5, 6], line, "conv F KH KW PAD ACT [STRIDE]")?;
                LayerSpec::Conv2d {
                    filters: number(toks[1], line, "filters")?,
                    kernel_h: number(toks[2], line, "kernel height")?,
                    kernel_w: number(toks[3], line, "kernel width")?,
                    padding: padding(toks[4], line)?,
                    activation: activation(toks[5], line)?,
                    stride: toks.get(6).map_or(Ok(1), |t| number(t, line, "stride"))?,
                }
            }
            "maxpool" => {
                arity(&toks, &[2, 3], line, "maxpool H W [STRIDE]")?;
                let pool_h = number(toks[1], line, "pool height")?;
                LayerSpec::MaxPool2d {
                    pool_h,
                    pool_w: number(toks[2], line, "pool width")?,
                    stride: toks
                        .get(3)
                        .map_or(Ok(pool_h), |t| number(t, line, "stride"))?,
                }
            }
            "flatten" => {
                arity(&toks, &[0], line, "flatten")?;
                LayerSpec::Flatten
            }
            "batchnorm" => {
                arity(&toks, &[0], line, "batchnorm")?;
                LayerSpec::BatchNorm
            }
            "dense" => {
                arity(&toks, &[2], line, "dense U ACT")?;
                LayerSpec::Dense {
                    units: number(toks[1], line, "units")?,
                    activation: activation(toks[2], line)?,
                }
            }
            other => return Err(Error::config(line, format!("unknown keyword '{other}'"))),
        };
        layers.push(spec);
        lines.push(line);
    }
    let input_shape = input.ok_or_else(|| Error::config(1, "missing `input H W C` statement"))?;
    let config = ModelConfig {
        input_shape,
        layers,
    };
    config.validate_with_lines(&lines, last_line)?;
    Ok(config)
}

impl ModelConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        parse_config(text)
    }

    /// Shape-check the layers and enforce the softmax-head rule.
    pub fn validate(&self) -> Result<()> {
        let lines: Vec<usize> = (1..=self.layers.len()).collect();
        self.validate_with_lines(&lines, self.layers.len())
    }

    fn validate_with_lines(&self, lines: &[usize], last_line: usize) -> Result<()> {
        let remap = |e: Error| match e {
            Error::Config { line, message } => Error::config(lines[line - 1], message),
            other => other,
        };
        param_count(&self.layers, &self.input_shape).map_err(remap)?;
        let n = self.layers.len();
        for (i, spec) in self.layers.iter().enumerate() {
            if spec.activation() == Activation::Softmax && i + 1 != n {
                return Err(Error::config(
                    lines[i],
                    "softmax is only allowed on the final layer",
                ));
            }
        }
        match self.layers.last() {
            Some(LayerSpec::Dense {
                activation: Activation::Softmax,
                ..
            }) => Ok(()),
            _ => Err(Error::config(
                last_line,
                "the final layer must be `dense K softmax`",
            )),
        }
    }

    pub fn num_classes(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::Dense { units, .. }) => *units,
            _ => 0,
        }
    }

    /// Per-layer output shapes and parameter counts.
    pub fn audit(&self) -> Result<ParamReport> {
        param_count(&self.layers, &self.input_shape)
    }

    /// Canonical text form accepted by [`parse_config`].
    pub fn to_text(&self) -> String {
        let [h, w, c] = <[usize; 3]>::try_from(&self.input_shape[..]).unwrap_or([0; 3]);
        let mut out = format!("input {h} {w} {c}\n");
        for spec in &self.layers {
            match *spec {
                LayerSpec::Conv2d {
                    filters,
                    kernel_h,
                    kernel_w,
                    padding,
                    activation,
                    stride,
                } => {
                    let _ = write!(
                        out,
                        "conv {filters} {kernel_h} {kernel_w} {padding} {activation}"
                    );
                    if stride != 1 {
                        let _ = write!(out, " {stride}");
                    }
                    out.push('\n');
                }
                LayerSpec::MaxPool2d {
                    pool_h,
                    pool_w,
                    stride,
                } => {
                    let _ = write!(out, "maxpool {pool_h} {pool_w}");
                    if stride != pool_h {
                        let _ = write!(out, " {stride}");
                    }
                    out.push('\n');
                }
                LayerSpec::Flatten => out.push_str("flatten\n"),
                LayerSpec::BatchNorm => out.push_str("batchnorm\n"),
                LayerSpec::Dense { units, activation } => {
                    let _ = writeln!(out, "dense {units} {activation}");
                }
            }
        }
        out
    }
}

/// Group digits in threes: `134293320` → `134,293,320`.
pub fn thousands(n: usize) -> String {
    let s = n.to_string();
    let mut out = String::with_capacity(s.len() + s.len() / 3);
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// Keras-style summary table followed by a `total/trainable` line.
pub fn render_report(report: &ParamReport) -> String {
    let shape = |s: &[usize]| {
        let dims: Vec<String> = s.iter().map(|d| d.to_string()).collect();
        format!("(None, {})", dims.join(", "))
    };
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<18} {:<24} {:>14}",
        "Layer", "Output Shape", "Param #"
    );
    let _ = writeln!(out, "{}", "=".repeat(58));
    let _ = writeln!(
        out,
        "{:<18} {:<24} {:>14}",
        "input",
        shape(&report.input_shape),
        0
    );
    for l in &report.layers {
        let _ = writeln!(
            out,
            "{:<18} {:<24} {:>14}",
            l.name,
            shape(&l.output_shape),
            thousands(l.params.total)
        );
    }
    let _ = writeln!(out, "{}", "=".repeat(58));
    let t = report.totals;
    let _ = writeln!(out, "Total params: {}", thousands(t.total));
    let _ = writeln!(out, "Trainable params: {}", thousands(t.trainable));
    let _ = writeln!(
        out,
        "Non-trainable params: {}",
        thousands(t.non_trainable())
    );
    let _ = writeln!(
        out,
        "total/trainable: {}/{}",
        thousands(t.total),
        thousands(t.trainable)
    );
    out
}
