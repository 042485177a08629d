//! Plain-text model files.
//!
//! ```text
//! crossaug-mapping 1
//! variant vae
//! input_width 224
//! output_width 504
//! latent_dim 112
//! beta 1.0
//! frozen true
//! network encoder
//! input_shape 224
//! dense 224 224
//! 0.0123 -0.98 ...        one line per weight row, then one bias line
//! relu
//! end
//! network mu
//! ...
//! ```
//!
//! Weights are row-major (`[in, out]` for dense, `[k, k, in, out]` for
//! conv2d, one line per output-channel row). Every value is printed with
//! Rust's shortest round-trip formatting, so reading a file back restores
//! each `f64` bit for bit. A bare network file starts with
//! `crossaug-network 1` followed by a single `network` block.

use std::fmt::Write as _;
use std::path::Path;

use crossaug_core::autoencoder::{MappingModel, Variant};
use crossaug_core::nn::{Activation, Conv2d, Dense, Layer, Network};
use crossaug_core::Tensor;

use super::write_bytes;
use crate::error::{CliError, Result};

const MAPPING_HEADER: &str = "crossaug-mapping 1";
const NETWORK_HEADER: &str = "crossaug-network 1";

fn write_tensor(out: &mut String, t: &Tensor, row_len: usize) {
    for row in t.data().chunks(row_len.max(1)) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

fn write_block(out: &mut String, name: &str, net: &Network) {
    let dims: Vec<String> = net.input_shape().iter().map(usize::to_string).collect();
    let _ = writeln!(out, "network {name}");
    let _ = writeln!(out, "input_shape {}", dims.join(" "));
    for layer in net.layers() {
        match layer {
            Layer::Dense(d) => {
                let _ = writeln!(out, "dense {} {}", d.inputs(), d.outputs());
                write_tensor(out, d.weight(), d.outputs());
                write_tensor(out, d.bias(), d.outputs());
            }
            Layer::Conv2d(c) => {
                let _ = writeln!(out, "conv2d {} {} {}", c.kernel(), c.in_channels(), c.out_channels());
                write_tensor(out, c.weight(), c.out_channels());
                write_tensor(out, c.bias(), c.out_channels());
            }
            Layer::Dropout { rate } => {
                let _ = writeln!(out, "dropout {rate:?}");
            }
            other => {
                let _ = writeln!(out, "{}", other.kind_name());
            }
        }
    }
    out.push_str("end\n");
}

pub fn network_to_string(net: &Network) -> String {
    let mut out = format!("{NETWORK_HEADER}\nfrozen {}\n", net.is_frozen());
    write_block(&mut out, "net", net);
    out
}

pub fn mapping_to_string(model: &MappingModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAPPING_HEADER}");
    let _ = writeln!(out, "variant {}", model.variant().name());
    let _ = writeln!(out, "input_width {}", model.input_width());
    let _ = writeln!(out, "output_width {}", model.output_width());
    let _ = writeln!(out, "latent_dim {}", model.latent_dim());
    let _ = writeln!(out, "beta {:?}", model.beta());
    let _ = writeln!(out, "frozen {}", model.is_frozen());
    write_block(&mut out, "encoder", model.encoder());
    let heads = model.heads();
    match model.variant() {
        Variant::Ae => write_block(&mut out, "latent", heads[0]),
        Variant::Vae => {
            write_block(&mut out, "mu", heads[0]);
            write_block(&mut out, "log_var", heads[1]);
        }
    }
    write_block(&mut out, "decoder", model.decoder());
    out
}

struct Lines<'a> {
    path: &'a Path,
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, message: impl Into<String>) -> CliError {
        CliError::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Result<&'a str> {
        match self.iter.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l.trim_end())
            }
            None => {
                self.line += 1;
                Err(self.err("unexpected end of file"))
            }
        }
    }

    fn key<'k>(&mut self, key: &'k str) -> Result<&'a str> {
        let l = self.next()?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok(v),
            _ => Err(self.err(format!("expected `{key} ...`, found `{l}`"))),
        }
    }

    fn parse<T: std::str::FromStr>(&self, s: &str, what: &str) -> Result<T> {
        s.trim().parse().map_err(|_| self.err(format!("invalid {what} `{s}`")))
    }

    fn value<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Result<T> {
        let v = self.key(key)?;
        self.parse(v, what)
    }

    fn usizes(&self, s: &str) -> Result<Vec<usize>> {
        s.split_whitespace().map(|t| self.parse(t, "size")).collect()
    }

    fn tensor(&mut self, shape: Vec<usize>, row_len: usize) -> Result<Tensor> {
        let total: usize = shape.iter().product();
        let mut data = Vec::with_capacity(total);
        while data.len() < total {
            let l = self.next()?;
            let row: Vec<f64> = l.split_whitespace().map(|t| self.parse(t, "number")).collect::<Result<_>>()?;
            if row.len() != row_len {
                return Err(self.err(format!("expected {row_len} values, found {}", row.len())));
            }
            data.extend(row);
        }
        Ok(Tensor::new(shape, data)?)
    }

    fn network(&mut self, name: &str) -> Result<Network> {
        let found = self.key("network")?;
        if found != name {
            return Err(self.err(format!("expected network `{name}`, found `{found}`")));
        }
        let dims = self.key("input_shape")?;
        let input_shape = self.usizes(dims)?;
        let mut layers = Vec::new();
        loop {
            let l = self.next()?;
            let mut parts = l.split_whitespace();
            let kind = parts.next().unwrap_or("");
            let args: Vec<&str> = parts.collect();
            let layer = match (kind, args.as_slice()) {
                ("end", []) => break,
                ("dense", [i, o]) => {
                    let (i, o) = (self.parse(i, "size")?, self.parse(o, "size")?);
                    let w = self.tensor(vec![i, o], o)?;
                    let b = self.tensor(vec![o], o)?;
                    Layer::Dense(Dense::from_parts(w, b)?)
                }
                ("conv2d", [k, ci, co]) => {
                    let (k, ci, co): (usize, usize, usize) =
                        (self.parse(k, "size")?, self.parse(ci, "size")?, self.parse(co, "size")?);
                    let w = self.tensor(vec![k, k, ci, co], co)?;
                    let b = self.tensor(vec![co], co)?;
                    Layer::Conv2d(Conv2d::from_parts(w, b)?)
                }
                ("dropout", [r]) => Layer::dropout(self.parse(r, "rate")?)?,
                ("maxpool2x2", []) => Layer::MaxPool2x2,
                ("flatten", []) => Layer::Flatten,
                ("relu", []) => Layer::Activation(Activation::Relu),
                ("sigmoid", []) => Layer::Activation(Activation::Sigmoid),
                ("softmax", []) => Layer::Activation(Activation::Softmax),
                _ => return Err(self.err(format!("unknown layer line `{l}`"))),
            };
            layers.push(layer);
        }
        Network::new(&input_shape, layers).map_err(|e| self.err(e.to_string()))
    }
}

fn lines<'a>(path: &'a Path, text: &'a str, header: &str) -> Result<Lines<'a>> {
    let mut l = Lines {
        path,
        iter: text.lines().enumerate(),
        line: 0,
    };
    let first = l.next()?;
    if first != header {
        return Err(l.err(format!("expected header `{header}`, found `{first}`")));
    }
    Ok(l)
}

pub fn network_from_str(path: &Path, text: &str) -> Result<Network> {
    let mut l = lines(path, text, NETWORK_HEADER)?;
    let frozen: bool = l.value("frozen", "flag")?;
    let net = l.network("net")?;
    Ok(if frozen { net.freeze() } else { net })
}

pub fn mapping_from_str(path: &Path, text: &str) -> Result<MappingModel> {
    let mut l = lines(path, text, MAPPING_HEADER)?;
    let variant: Variant = l.key("variant")?.parse().map_err(|_| l.err("invalid variant"))?;
    let input_width: usize = l.value("input_width", "width")?;
    let output_width: usize = l.value("output_width", "width")?;
    let latent_dim: usize = l.value("latent_dim", "latent size")?;
    let beta: f64 = l.value("beta", "beta")?;
    let frozen: bool = l.value("frozen", "flag")?;
    let encoder = l.network("encoder")?;
    let (ae, vae) = match variant {
        Variant::Ae => (Some(l.network("latent")?), None),
        Variant::Vae => (None, Some((l.network("mu")?, l.network("log_var")?))),
    };
    let decoder = l.network("decoder")?;
    let model = MappingModel::from_parts(variant, encoder, ae, vae, decoder, beta, frozen)?;
    if (model.input_width(), model.output_width(), model.latent_dim()) != (input_width, output_width, latent_dim) {
        return Err(CliError::Parse {
            path: path.to_path_buf(),
            line: 2,
            message: format!(
                "header widths {input_width}/{output_width}/{latent_dim} disagree with the networks ({}/{}/{})",
                model.input_width(),
                model.output_width(),
                model.latent_dim()
            ),
        });
    }
    Ok(model)
}

pub fn write_mapping(path: &Path, model: &MappingModel) -> Result<()> {
    write_bytes(path, mapping_to_string(model).as_bytes())
}

pub fn read_mapping(path: &Path) -> Result<MappingModel> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    mapping_from_str(path, &text)
}

pub fn write_network(path: &Path, net: &Network) -> Result<()> {
    write_bytes(path, network_to_string(net).as_bytes())
}

pub fn read_network(path: &Path) -> Result<Network> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    network_from_str(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crossaug_core::autoencoder::{build_mapping, MappingSpec};
    use crossaug_core::eval::{build_classifier, ClassifierConfig};
    use crossaug_core::RngState;

    fn same_bits(a: &[&Tensor], b: &[&Tensor]) -> bool {
        a.len() == b.len()
            && a.iter().zip(b).all(|(x, y)| {
                x.shape() == y.shape() && x.data().iter().zip(y.data()).all(|(p, q)| p.to_bits() == q.to_bits())
            })
    }

    #[test]
    fn mapping_round_trip_is_bit_exact() {
        let p = Path::new("m.txt");
        for variant in [Variant::Ae, Variant::Vae] {
            let spec = MappingSpec::with_defaults(variant, 27, 78);
            let mut model = build_mapping(&spec, &mut RngState::new(3)).unwrap();
            if variant == Variant::Ae {
                model = model.freeze();
            }
            let text = mapping_to_string(&model);
            let back = mapping_from_str(p, &text).unwrap();
            assert!(same_bits(&model.params(), &back.params()));
            assert_eq!(back.variant(), variant);
            assert_eq!(back.is_frozen(), model.is_frozen());
            assert_eq!(back.layer_widths(), model.layer_widths());
            assert_eq!(mapping_to_string(&back), text);
        }
    }

    #[test]
    fn awkward_values_survive() {
        let w = Tensor::new(vec![2, 2], vec![1e-300, -0.0, 0.1 + 0.2, f64::MAX]).unwrap();
        let b = Tensor::new(vec![2], vec![f64::MIN_POSITIVE / 4.0, 1.0 / 3.0]).unwrap();
        let net = Network::new(&[2], vec![Layer::Dense(Dense::from_parts(w, b).unwrap())]).unwrap();
        let back = network_from_str(Path::new("n"), &network_to_string(&net)).unwrap();
        assert!(same_bits(&net.params(), &back.params()));
    }

    #[test]
    fn classifier_round_trip() {
        let net = build_classifier(&ClassifierConfig::image(), &[28, 28, 1], 10, &mut RngState::new(1))
            .unwrap()
            .freeze();
        let back = network_from_str(Path::new("n"), &network_to_string(&net)).unwrap();
        assert_eq!(back.layers(), net.layers());
        assert!(back.is_frozen());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let spec = MappingSpec::with_defaults(Variant::Ae, 4, 6);
        let model = build_mapping(&spec, &mut RngState::new(0)).unwrap();
        let text = mapping_to_string(&model).replacen("variant ae", "variant xx", 1);
        assert!(matches!(mapping_from_str(Path::new("m"), &text), Err(CliError::Parse { line: 2, .. })));
        let good = mapping_to_string(&model);
        let cut: String = good.lines().take(12).map(|l| format!("{l}\n")).collect();
        assert!(matches!(mapping_from_str(Path::new("m"), &cut), Err(CliError::Parse { line: 13, .. })));
    }
}
