use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Circuit, CircuitBuilder, CircuitError, ProductKind, Result, StructureConfig, VariableSpec};
use crate::scalar::Real;

/// Randomized tensorized circuit.
///
/// Each of the `n_repetitions` repetitions shuffles the variables and splits
/// them recursively in halves, `n_layers` region levels deep. Leaf regions get
/// `n_input` factorized categoricals, internal regions a Kronecker product of
/// their two halves followed by an `n_sum`-unit mixture. The top product of
/// every repetition feeds one root sum unit.
pub fn build_circuit<T: Real>(spec: &VariableSpec, cfg: &StructureConfig) -> Result<Circuit<T>> {
    let vars = spec.var_count();
    if vars == 0 {
        return Err(CircuitError::Spec("var_count must be positive".into()));
    }
    if cfg.n_layers == 0 || cfg.n_sum == 0 || cfg.n_input == 0 || cfg.n_repetitions == 0 {
        return Err(CircuitError::Structure(
            "n_layers, n_sum, n_input and n_repetitions must be positive".into(),
        ));
    }
    let leaf_regions = 1u128 << (cfg.n_layers - 1).min(127);
    if cfg.n_layers > 64 || leaf_regions > vars as u128 {
        return Err(CircuitError::Structure(format!(
            "n_layers {} exceeds log2({vars}) + 1",
            cfg.n_layers
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.structure_seed);
    let mut b = CircuitBuilder::new(spec.clone());
    let mut tops = Vec::with_capacity(cfg.n_repetitions);
    for _ in 0..cfg.n_repetitions {
        let mut order: Vec<usize> = (0..vars).collect();
        order.shuffle(&mut rng);
        tops.push(region(&mut b, &order, 1, true, cfg, &mut rng)?);
    }

    let root = if tops.len() == 1 && b.layers[tops[0]].units == 1 {
        tops[0]
    } else {
        let inputs: usize = tops.iter().map(|&t| b.layers[t].units).sum();
        let logits = positive_logits(inputs, &mut rng);
        b.sum(&tops, 1, logits)?
    };
    b.finish(root)
}

fn region<T: Real>(
    b: &mut CircuitBuilder<T>,
    vars: &[usize],
    level: usize,
    top: bool,
    cfg: &StructureConfig,
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    if level == cfg.n_layers {
        let mut scope = vars.to_vec();
        scope.sort_unstable();
        let n: usize = scope
            .iter()
            .map(|&v| b.spec().categories(v) * cfg.n_input)
            .sum();
        let logits = (0..n)
            .map(|_| T::lit(rng.gen_range(-0.01..=0.01)))
            .collect();
        return b.input(&scope, cfg.n_input, logits);
    }
    let (left, right) = vars.split_at(vars.len() / 2);
    let l = region(b, left, level + 1, false, cfg, rng)?;
    let r = region(b, right, level + 1, false, cfg, rng)?;
    let p = b.product(&[l, r], ProductKind::Kronecker)?;
    if top {
        return Ok(p);
    }
    let inputs = b.layers[p].units;
    let logits = positive_logits(cfg.n_sum * inputs, rng);
    b.sum(&[p], cfg.n_sum, logits)
}

/// Logits of weights drawn uniformly from (0.01, 1]; row normalization happens on use.
fn positive_logits<T: Real>(n: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    (0..n)
        .map(|_| T::lit(rng.gen_range(0.01f64..=1.0).ln()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::LayerKind;

    fn cfg(n_layers: usize, n_sum: usize, n_input: usize, n_rep: usize, seed: u64) -> StructureConfig {
        StructureConfig {
            n_layers,
            n_sum,
            n_input,
            n_repetitions: n_rep,
            structure_seed: seed,
        }
    }

    #[test]
    fn degenerate_single_variable_circuit() {
        let spec = VariableSpec::new(vec![4]).unwrap();
        let c: Circuit<f64> = build_circuit(&spec, &cfg(1, 1, 1, 1, 0)).unwrap();
        assert_eq!(c.layers().len(), 1);
        assert!(matches!(c.layers()[0].kind(), LayerKind::Input(_)));
        assert_eq!(c.layers()[0].scope(), &[0]);
    }

    #[test]
    fn molecular_scope_has_ninety_variables() {
        let m = 9;
        let mut sizes = Vec::new();
        for _ in 0..m {
            sizes.push(5);
            sizes.extend(std::iter::repeat_n(4, m));
        }
        let spec = VariableSpec::new(sizes).unwrap();
        assert_eq!(spec.var_count(), 90);
        let c: Circuit<f64> = build_circuit(&spec, &cfg(2, 4, 4, 3, 1)).unwrap();
        assert_eq!(c.layers()[c.root()].scope().len(), 90);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn rejects_too_deep_structures() {
        let spec = VariableSpec::uniform(4, 2).unwrap();
        assert!(build_circuit::<f64>(&spec, &cfg(3, 2, 2, 1, 0)).is_ok());
        let err = build_circuit::<f64>(&spec, &cfg(4, 2, 2, 1, 0)).unwrap_err();
        assert!(matches!(err, CircuitError::Structure(_)));
        assert!(build_circuit::<f64>(&spec, &cfg(0, 2, 2, 1, 0)).is_err());
    }

    #[test]
    fn same_seed_same_structure() {
        let spec = VariableSpec::uniform(12, 3).unwrap();
        let a: Circuit<f64> = build_circuit(&spec, &cfg(3, 3, 2, 4, 99)).unwrap();
        let b: Circuit<f64> = build_circuit(&spec, &cfg(3, 3, 2, 4, 99)).unwrap();
        assert_eq!(a.layers().len(), b.layers().len());
        for (x, y) in a.layers().iter().zip(b.layers()) {
            assert_eq!(x.scope(), y.scope());
            assert_eq!(x.children(), y.children());
        }
        let pa = a.params();
        let pb = b.params();
        assert!(pa.iter().zip(&pb).all(|(x, y)| x.to_bits() == y.to_bits()));

        let c: Circuit<f64> = build_circuit(&spec, &cfg(3, 3, 2, 4, 100)).unwrap();
        assert_ne!(c.params(), pa);
    }
}
