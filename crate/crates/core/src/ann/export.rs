//! Weight files.
//!
//! The portable format is `key = value` text:
//!
//! ```text
//! [meta]
//! version = mlpw-1
//! layer_sizes = 3,6,3,1
//! hidden_activation = tanh
//! output_activation = tanh
//! [normalization]
//! irradiance_min = ...        (irradiance, temperature, load, duty)
//! [layer 1]
//! rows = 6
//! cols = 3
//! weights = w00, w01, ...     (row-major, 17 significant digits)
//! biases = b0, ...
//! ```

use std::fmt::Write as _;

use super::activation::ActivationKind;
use super::network::{Layer, MlpNetwork};
use crate::dataset::NormalizationParams;
use crate::error::{Error, Result};
use crate::fmt::exact;
use crate::kv::KvDoc;

pub const WEIGHT_FORMAT_VERSION: &str = "mlpw-1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    PortableText,
    CSource,
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| exact(*x)).collect::<Vec<_>>().join(", ")
}

fn check_finite(net: &MlpNetwork, norm: &NormalizationParams) -> Result<()> {
    if !net.is_finite() {
        return Err(Error::NonFinite("network has a non-finite weight; refusing export".into()));
    }
    let n = norm.inputs.iter().chain(std::iter::once(&norm.target));
    if n.flat_map(|r| [r.min, r.max]).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("non-finite normalization bound".into()));
    }
    Ok(())
}

pub fn export(net: &MlpNetwork, norm: &NormalizationParams, format: ExportFormat) -> Result<String> {
    match format {
        ExportFormat::PortableText => export_portable(net, norm),
        ExportFormat::CSource => export_c_source(net, norm),
    }
}

pub fn export_portable(net: &MlpNetwork, norm: &NormalizationParams) -> Result<String> {
    check_finite(net, norm)?;
    let sizes: Vec<String> = net.layer_sizes().iter().map(|s| s.to_string()).collect();
    let mut s = String::new();
    writeln!(s, "# multilayer perceptron weights").unwrap();
    writeln!(s, "[meta]").unwrap();
    writeln!(s, "version = {WEIGHT_FORMAT_VERSION}").unwrap();
    writeln!(s, "layer_sizes = {}", sizes.join(",")).unwrap();
    writeln!(s, "hidden_activation = {}", net.hidden_activation).unwrap();
    writeln!(s, "output_activation = {}", net.output_activation).unwrap();
    writeln!(s, "[normalization]").unwrap();
    s += &norm.to_kv();
    for (n, layer) in net.layers.iter().enumerate() {
        writeln!(s, "[layer {}]", n + 1).unwrap();
        writeln!(s, "rows = {}", layer.outputs).unwrap();
        writeln!(s, "cols = {}", layer.inputs).unwrap();
        writeln!(s, "weights = {}", join(&layer.weights)).unwrap();
        writeln!(s, "biases = {}", join(&layer.biases)).unwrap();
    }
    Ok(s)
}

pub fn import_portable(text: &str) -> Result<(MlpNetwork, NormalizationParams)> {
    let doc = KvDoc::parse(text)?;
    let mut meta = doc.reader("meta");
    let version: String = meta.req("version")?;
    if version != WEIGHT_FORMAT_VERSION {
        return Err(Error::invalid(
            "weight file",
            format!("unsupported version `{version}`"),
        ));
    }
    let sizes: Vec<usize> = meta
        .list("layer_sizes")?
        .ok_or_else(|| Error::MissingKey("layer_sizes".into()))?;
    let hidden: ActivationKind = meta.req::<String>("hidden_activation")?.parse()?;
    let output: ActivationKind = meta.req::<String>("output_activation")?.parse()?;
    meta.finish(&[])?;
    let norm = NormalizationParams::from_section(&doc, "normalization")?;

    let mut net = MlpNetwork::zeros(&sizes, hidden, output)?;
    for (n, layer) in net.layers.iter_mut().enumerate() {
        let section = format!("layer {}", n + 1);
        let mut r = doc.reader(&section);
        let rows: usize = r.req("rows")?;
        let cols: usize = r.req("cols")?;
        let weights: Vec<f64> = r.list("weights")?.unwrap_or_default();
        let biases: Vec<f64> = r.list("biases")?.unwrap_or_default();
        r.finish(&[])?;
        if rows != layer.outputs
            || cols != layer.inputs
            || weights.len() != rows * cols
            || biases.len() != rows
        {
            return Err(Error::Shape(format!(
                "[{section}] declares {rows}x{cols} with {} weights and {} biases; expected {}x{}",
                weights.len(),
                biases.len(),
                layer.outputs,
                layer.inputs
            )));
        }
        *layer = Layer {
            inputs: cols,
            outputs: rows,
            weights,
            biases,
        };
    }
    let n_layers = net.layers.len();
    let known = |s: &str| {
        matches!(s, "" | "meta" | "normalization")
            || s.strip_prefix("layer ")
                .and_then(|n| n.parse::<usize>().ok())
                .is_some_and(|n| (1..=n_layers).contains(&n))
    };
    let extra = doc.sections().into_iter().find(|s| !known(s));
    if let Some(s) = extra {
        return Err(Error::invalid("weight file", format!("unexpected section [{s}]")));
    }
    if !net.is_finite() {
        return Err(Error::NonFinite("weight file contains a non-finite weight".into()));
    }
    Ok((net, norm))
}

fn c_array(name: &str, xs: &[f64]) -> String {
    let body: Vec<String> = xs.iter().map(|x| exact(*x)).collect();
    format!(
        "static const double {name}[{}] = {{\n    {}\n}};\n",
        xs.len(),
        body.join(",\n    ")
    )
}

fn c_activation(kind: ActivationKind) -> &'static str {
    match kind {
        ActivationKind::Tanh => "tanh(x)",
        ActivationKind::Linear => "x",
        ActivationKind::Relu => "(x > 0.0 ? x : 0.0)",
        ActivationKind::Gelu => "0.5 * x * erfc(-x / 1.4142135623730951)",
        ActivationKind::Selu => {
            "(x > 0.0 ? 1.0507009873554805 * x : 1.0507009873554805 * 1.6732632423543772 * expm1(x))"
        }
        ActivationKind::Sigmoid => "1.0 / (1.0 + exp(-x))",
        ActivationKind::Softmax => "x",
        ActivationKind::Softplus => "(x > 0.0 ? x : 0.0) + log1p(exp(-fabs(x)))",
        ActivationKind::Softsign => "x / (1.0 + fabs(x))",
        ActivationKind::Swish => "x / (1.0 + exp(-x))",
    }
}

/// A free-standing C translation unit holding the weights as constant arrays
/// and a `pvann_predict_duty` function that maps physical inputs to a duty
/// cycle.
pub fn export_c_source(net: &MlpNetwork, norm: &NormalizationParams) -> Result<String> {
    check_finite(net, norm)?;
    let sizes: Vec<String> = net.layer_sizes().iter().map(|s| s.to_string()).collect();
    let widest = net.layer_sizes().into_iter().max().unwrap_or(1);
    let mut s = String::new();
    writeln!(s, "/* Generated MLP {} ({WEIGHT_FORMAT_VERSION}). */", sizes.join("-")).unwrap();
    writeln!(s, "/* hidden activation: {}, output activation: {} */", net.hidden_activation, net.output_activation).unwrap();
    writeln!(s, "#include <math.h>\n").unwrap();
    for (n, layer) in net.layers.iter().enumerate() {
        s += &c_array(&format!("L{}_W", n + 1), &layer.weights);
        s += &c_array(&format!("L{}_B", n + 1), &layer.biases);
    }
    let mins: Vec<f64> = norm.inputs.iter().map(|r| r.min).collect();
    let maxs: Vec<f64> = norm.inputs.iter().map(|r| r.max).collect();
    s += &c_array("IN_MIN", &mins);
    s += &c_array("IN_MAX", &maxs);
    writeln!(s, "static const double DUTY_MIN = {};", exact(norm.target.min)).unwrap();
    writeln!(s, "static const double DUTY_MAX = {};\n", exact(norm.target.max)).unwrap();

    for (tag, kind) in [("hidden", net.hidden_activation), ("output", net.output_activation)] {
        writeln!(s, "static void act_{tag}(double *v, int n)\n{{").unwrap();
        if kind == ActivationKind::Softmax {
            s += "    double m = v[0], sum = 0.0;\n    int k;\n";
            s += "    for (k = 1; k < n; ++k) if (v[k] > m) m = v[k];\n";
            s += "    for (k = 0; k < n; ++k) { v[k] = exp(v[k] - m); sum += v[k]; }\n";
            s += "    for (k = 0; k < n; ++k) v[k] /= sum;\n";
        } else {
            s += "    int k;\n    for (k = 0; k < n; ++k) {\n        double x = v[k];\n";
            writeln!(s, "        v[k] = {};", c_activation(kind)).unwrap();
            s += "    }\n";
        }
        s += "}\n\n";
    }
    s += "static void dense(const double *w, const double *b, const double *x, double *y, int rows, int cols)\n{\n";
    s += "    int k, j;\n    for (k = 0; k < rows; ++k) {\n        double acc = b[k];\n";
    s += "        for (j = 0; j < cols; ++j) acc += w[k * cols + j] * x[j];\n        y[k] = acc;\n    }\n}\n\n";

    writeln!(s, "double pvann_predict_duty(double irradiance, double temperature, double load)\n{{").unwrap();
    writeln!(s, "    double a[{widest}], b[{widest}];").unwrap();
    s += "    double duty;\n    int k;\n";
    s += "    a[0] = irradiance; a[1] = temperature; a[2] = load;\n";
    s += "    for (k = 0; k < 3; ++k) a[k] = 2.0 * (a[k] - IN_MIN[k]) / (IN_MAX[k] - IN_MIN[k]) - 1.0;\n";
    let last = net.layers.len() - 1;
    for (n, layer) in net.layers.iter().enumerate() {
        let (src, dst) = if n % 2 == 0 { ("a", "b") } else { ("b", "a") };
        writeln!(
            s,
            "    dense(L{0}_W, L{0}_B, {src}, {dst}, {1}, {2});",
            n + 1,
            layer.outputs,
            layer.inputs
        )
        .unwrap();
        let tag = if n == last { "output" } else { "hidden" };
        writeln!(s, "    act_{tag}({dst}, {});", layer.outputs).unwrap();
    }
    let out = if last.is_multiple_of(2) { "b" } else { "a" };
    writeln!(s, "    duty = DUTY_MIN + ({out}[0] + 1.0) * 0.5 * (DUTY_MAX - DUTY_MIN);").unwrap();
    s += "    if (duty < 0.05) duty = 0.05;\n    if (duty > 0.95) duty = 0.95;\n    return duty;\n}\n";
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ann::DEFAULT_LAYER_SIZES;
    use crate::dataset::Range;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn norm() -> NormalizationParams {
        NormalizationParams {
            inputs: [
                Range { min: 100.0, max: 1000.0 },
                Range { min: 5.11, max: 60.61 },
                Range { min: 1.0, max: 19.0 },
            ],
            target: Range {
                min: 0.174826637,
                max: 0.757993734,
            },
        }
    }

    #[test]
    fn portable_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for kind in ActivationKind::ALL {
            let net = MlpNetwork::initialized(&DEFAULT_LAYER_SIZES, kind, ActivationKind::Tanh, 21).unwrap();
            let text = export_portable(&net, &norm()).unwrap();
            let (back, n) = import_portable(&text).unwrap();
            assert_eq!(back, net);
            assert_eq!(n, norm());
            for _ in 0..100 {
                let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
                let a = net.predict(&x).unwrap()[0];
                let b = back.predict(&x).unwrap()[0];
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn zero_network_exports_zero_arrays() {
        let net = MlpNetwork::zeros(&DEFAULT_LAYER_SIZES, ActivationKind::Tanh, ActivationKind::Tanh).unwrap();
        let text = export_portable(&net, &norm()).unwrap();
        assert!(text.contains("[layer 1]\nrows = 6\ncols = 3\n"));
        let (back, _) = import_portable(&text).unwrap();
        assert!(back.params().iter().all(|&p| p == 0.0));
        assert_eq!(back.layer_sizes(), DEFAULT_LAYER_SIZES.to_vec());
    }

    #[test]
    fn non_finite_weights_are_refused() {
        let mut net = MlpNetwork::zeros(&[3, 2, 1], ActivationKind::Tanh, ActivationKind::Tanh).unwrap();
        net.layers[1].weights[0] = f64::NAN;
        assert!(matches!(export_portable(&net, &norm()), Err(Error::NonFinite(_))));
        assert!(matches!(export_c_source(&net, &norm()), Err(Error::NonFinite(_))));
    }

    #[test]
    fn malformed_files_are_rejected() {
        let net = MlpNetwork::zeros(&[3, 2, 1], ActivationKind::Tanh, ActivationKind::Tanh).unwrap();
        let good = export_portable(&net, &norm()).unwrap();
        assert!(import_portable(&good.replace("mlpw-1", "mlpw-9")).is_err());
        assert!(import_portable(&good.replace("rows = 2", "rows = 3")).is_err());
        assert!(import_portable(&format!("{good}[layer 7]\nrows = 1\n")).is_err());
    }

    #[test]
    fn c_source_counts() {
        let net =
            MlpNetwork::initialized(&DEFAULT_LAYER_SIZES, ActivationKind::Tanh, ActivationKind::Tanh, 2).unwrap();
        let c = export_c_source(&net, &norm()).unwrap();
        let count = |prefix: &str| -> usize {
            c.split("static const double ")
                .filter(|chunk| chunk.starts_with(prefix))
                .map(|chunk| {
                    let body = &chunk[chunk.find('{').unwrap() + 1..chunk.find('}').unwrap()];
                    body.split(',').filter(|t| !t.trim().is_empty()).count()
                })
                .sum()
        };
        let weights: usize = (1..=3).map(|n| count(&format!("L{n}_W"))).sum();
        let biases: usize = (1..=3).map(|n| count(&format!("L{n}_B"))).sum();
        assert_eq!(weights, 39);
        assert_eq!(biases, 10);
        assert!(c.contains("#include <math.h>"));
        assert_eq!(c.matches("#include").count(), 1);
    }
}
