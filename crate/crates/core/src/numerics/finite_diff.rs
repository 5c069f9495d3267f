use super::ParamTree;

/// Central-difference gradient of a scalar function of a parameter tree.
pub fn finite_diff_grad<F>(f: F, params: &ParamTree, h: f64) -> ParamTree
where
    F: Fn(&ParamTree) -> f64,
{
    let mut grads = params.zeros_like();
    let mut probe = params.clone();
    let names: Vec<String> = params.names().map(str::to_owned).collect();
    for name in &names {
        let n = params.get(name).map_or(0, |t| t.len());
        for i in 0..n {
            let orig = params.get(name).unwrap().data()[i];
            probe.get_mut(name).unwrap().data_mut()[i] = orig + h;
            let plus = f(&probe);
            probe.get_mut(name).unwrap().data_mut()[i] = orig - h;
            let minus = f(&probe);
            probe.get_mut(name).unwrap().data_mut()[i] = orig;
            grads.get_mut(name).unwrap().data_mut()[i] = (plus - minus) / (2.0 * h);
        }
    }
    grads
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
