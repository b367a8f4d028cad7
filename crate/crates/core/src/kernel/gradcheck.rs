use std::collections::BTreeMap;

use super::ParamStore;

/// Central-difference gradient of `f` with respect to every trainable scalar
/// in `store`. `f` must be deterministic (no dropout).
pub fn finite_diff_grad<F>(mut f: F, store: &ParamStore, eps: f64) -> BTreeMap<String, Vec<f64>>
where
    F: FnMut(&ParamStore) -> f64,
{
    let mut work = store.clone();
    let mut out = BTreeMap::new();
    let names: Vec<String> = store.iter().filter(|(_, t)| t.requires_grad).map(|(n, _)| n.to_string()).collect();
    for name in names {
        let n = work.get(&name).map_or(0, |t| t.len());
        let mut g = vec![0.0; n];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = work.get(&name).unwrap().data()[i];
            work.get_mut(&name).unwrap().data_mut()[i] = orig + eps;
            let up = f(&work);
            work.get_mut(&name).unwrap().data_mut()[i] = orig - eps;
            let down = f(&work);
            work.get_mut(&name).unwrap().data_mut()[i] = orig;
            *gi = (up - down) / (2.0 * eps);
        }
        out.insert(name, g);
    }
    out
}

/// |a − b| / max(|a|, |b|, floor). The floor keeps entries whose true
/// gradient is near zero from dominating through round-off.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{Graph, Mat, Tensor};

    fn store_with(name: &str, shape: Vec<usize>, data: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new(0);
        s.insert(name, Tensor::new(shape, data).unwrap().trainable()).unwrap();
        s
    }

    #[test]
    fn square_at_three() {
        let s = store_with("p", vec![1], vec![3.0]);
        let g = finite_diff_grad(|s| s.get("p").unwrap().data()[0].powi(2), &s, 1e-5);
        assert!((g["p"][0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant_function_is_zero() {
        let s = store_with("p", vec![3], vec![1.0, 2.0, 3.0]);
        let g = finite_diff_grad(|_| 4.2, &s, 1e-5);
        assert!(g["p"].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn quadratic_form_matches_closed_form() {
        let a = [2.0, -1.0, 0.5, 0.3, 1.5, -0.7, 0.0, 0.4, 3.0];
        let x = vec![0.3, -1.2, 0.8];
        let s = store_with("x", vec![3], x.clone());
        let g = finite_diff_grad(
            |s| {
                let x = s.get("x").unwrap().data();
                (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| x[i] * a[i * 3 + j] * x[j]).sum()
            },
            &s,
            1e-5,
        );
        for i in 0..3 {
            let expect: f64 = (0..3).map(|j| (a[i * 3 + j] + a[j * 3 + i]) * x[j]).sum();
            assert!((g["x"][i] - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn backward_matches_fd_on_small_graph() {
        let mut s = ParamStore::new(9);
        s.add_fan_in("w", vec![3, 4]).unwrap();
        s.add_fan_in("v", vec![4, 2]).unwrap();
        let f = |s: &ParamStore, back: bool, out: &mut ParamStore| {
            let mut g = Graph::new();
            let x = g.constant(Mat::new(2, 3, vec![0.5, -0.2, 1.0, 0.3, 0.8, -1.1]));
            let w = g.param(s, "w").unwrap();
            let v = g.param(s, "v").unwrap();
            let h = g.matmul(x, w).unwrap();
            let h = g.tanh(h);
            let a = g.softmax_rows(h).unwrap();
            let z = g.matmul(a, v).unwrap();
            let z = g.sum_rows(z);
            let l = g.cross_entropy(z, 1).unwrap();
            if back {
                g.backward(l, out).unwrap();
            }
            g.scalar(l)
        };
        let mut grads = s.clone();
        f(&s, true, &mut grads);
        let fd = finite_diff_grad(|p| f(p, false, &mut p.clone()), &s, 1e-5);
        for (name, t) in grads.iter() {
            for (a, b) in t.grad().unwrap().iter().zip(&fd[name]) {
                assert!(relative_error(*a, *b, 1e-4) < 1e-6, "{name}: {a} vs {b}");
            }
        }
    }
}
