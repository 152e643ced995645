//! Plain-text model files.
//!
//! ```text
//! gp-passivity-model 1
//! d <input dim>
//! n <outputs>
//! m <points>
//! inputs
//! <m lines, d values each>
//! output <i>
//! signal_variance <v>
//! lengthscales <d values>
//! noise_std <v>
//! noise_var <v>          # diagonal term actually used, noise plus jitter
//! alpha
//! <m lines>
//! ```
//! Every float is written with 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::kernel::Hyperparameters;
use super::model::{GpModel, OutputModel};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, LineReader};

const MAGIC: &str = "gp-passivity-model";
const VERSION: u32 = 1;

impl GpModel {
    pub fn to_text(&self) -> String {
        let d = self.input_dim();
        let m = self.num_points();
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC} {VERSION}");
        let _ = writeln!(s, "d {d}");
        let _ = writeln!(s, "n {}", self.output_dim());
        let _ = writeln!(s, "m {m}");
        s.push_str("inputs\n");
        for j in 0..m {
            let row: Vec<String> = self.inputs.column(j).iter().map(|v| fmt_f64(*v)).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        for (i, o) in self.outputs.iter().enumerate() {
            let _ = writeln!(s, "output {}", i + 1);
            let _ = writeln!(s, "signal_variance {}", fmt_f64(o.hyper.signal_variance));
            let ls: Vec<String> = o.hyper.lengthscales.iter().map(|v| fmt_f64(*v)).collect();
            let _ = writeln!(s, "lengthscales {}", ls.join(" "));
            let _ = writeln!(s, "noise_std {}", fmt_f64(o.hyper.noise_std));
            let _ = writeln!(s, "noise_var {}", fmt_f64(o.noise_var));
            s.push_str("alpha\n");
            for a in o.alpha.iter() {
                s.push_str(&fmt_f64(*a));
                s.push('\n');
            }
        }
        s
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let mut r = LineReader::new(text, origin);
        let header = r.words()?;
        if header.first() != Some(&MAGIC) || header.get(1) != Some(&"1") {
            return Err(r.error("not a version-1 model file"));
        }
        let d = r.keyed_usize("d")?;
        let n = r.keyed_usize("n")?;
        let m = r.keyed_usize("m")?;
        r.expect_tag("inputs")?;
        let mut inputs = DMatrix::zeros(d, m);
        for j in 0..m {
            let row = r.floats(d)?;
            inputs.column_mut(j).copy_from_slice(&row);
        }
        let mut outputs = Vec::with_capacity(n);
        for i in 0..n {
            let idx = r.keyed_usize("output")?;
            if idx != i + 1 {
                return Err(r.error(format!("expected output {}, found {idx}", i + 1)));
            }
            let signal_variance = r.keyed_floats("signal_variance", 1)?[0];
            let lengthscales = r.keyed_floats("lengthscales", d)?;
            let noise_std = r.keyed_floats("noise_std", 1)?[0];
            let noise_var = r.keyed_floats("noise_var", 1)?[0];
            r.expect_tag("alpha")?;
            let mut alpha = DVector::zeros(m);
            for j in 0..m {
                alpha[j] = r.floats(1)?[0];
            }
            let hyper = Hyperparameters::new(signal_variance, lengthscales, noise_std).map_err(|e| r.error(e.to_string()))?;
            outputs.push(OutputModel::restore(&inputs, hyper, noise_var, alpha)?);
        }
        Ok(GpModel { inputs, outputs })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|source| Error::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_text(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Hyperparameters, TrainingSet};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reload_reproduces_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = DMatrix::from_fn(3, 30, |_, _| rng.random_range(-2.0..2.0));
        let y = DMatrix::from_fn(30, 2, |j, i| f64::sin(x[(i, j)]) + 0.3 * x[(2, j)]);
        let data = TrainingSet::new(x, y, vec![0.05, 0.0]).unwrap();
        let hypers = vec![
            Hyperparameters::new(1.1, vec![0.9, 1.3, 2.0], 0.05).unwrap(),
            Hyperparameters::new(0.6, vec![1.0, 0.7, 0.4], 0.0).unwrap(),
        ];
        let model = GpModel::fit(&data, &hypers).unwrap();
        let text = model.to_text();
        let back = GpModel::from_text(&text, Path::new("mem")).unwrap();
        assert_eq!(back.to_text(), text);
        for _ in 0..20 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(-2.5..2.5)).collect();
            let a = model.predict(&q).unwrap();
            let b = back.predict(&q).unwrap();
            for k in 0..2 {
                assert!((a.mean[k] - b.mean[k]).abs() <= 1e-12);
                assert!((a.var[k] - b.var[k]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn reports_line_of_bad_token() {
        let err = GpModel::from_text("gp-passivity-model 1\nd 1\nn 1\nm 1\ninputs\nabc\n", Path::new("f")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 6),
            other => panic!("unexpected {other:?}"),
        }
    }
}
