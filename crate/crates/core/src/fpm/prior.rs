use log::warn;

use crate::transform::{fit, Family, Transform};

/// Fits `family` from `nominal` to the current estimates and returns the
/// projected nominal points.
///
/// With `boards`, each board gets its own fit; a board whose fit fails uses a
/// global similarity. If no fit is possible the estimates pass through.
pub fn apply_prior(
    estimates: &[[f64; 2]],
    nominal: &[[f64; 2]],
    boards: Option<&[usize]>,
    family: Family,
) -> Vec<[f64; 2]> {
    let global_family = if boards.is_some() { Family::Similarity } else { family };
    let global = match fit(global_family, nominal, estimates, None) {
        Ok(t) => t,
        Err(e) => {
            warn!("illuminator prior not applied: {e}");
            return estimates.to_vec();
        }
    };
    let Some(boards) = boards else {
        return nominal.iter().map(|p| global.apply(*p)).collect();
    };
    let count = boards.iter().copied().max().map_or(0, |b| b + 1);
    let per_board: Vec<Transform> = (0..count)
        .map(|b| {
            let idx: Vec<usize> = (0..boards.len()).filter(|&i| boards[i] == b).collect();
            let src: Vec<[f64; 2]> = idx.iter().map(|&i| nominal[i]).collect();
            let dst: Vec<[f64; 2]> = idx.iter().map(|&i| estimates[i]).collect();
            if idx.is_empty() {
                return global;
            }
            fit(family, &src, &dst, None).unwrap_or_else(|e| {
                warn!("board {b}: {e}; using the global prior");
                global
            })
        })
        .collect();
    nominal.iter().zip(boards).map(|(p, b)| per_board[*b].apply(*p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(n: usize) -> Vec<[f64; 2]> {
        (0..n)
            .map(|i| {
                let t = i as f64 * 0.7;
                let r = 0.05 + 0.01 * (i % 5) as f64;
                [r * t.cos(), r * t.sin()]
            })
            .collect()
    }

    #[test]
    fn consistent_estimates_are_a_fixed_point() {
        let nominal = ring(40);
        let a = Transform::similarity(4.0, 1.05, [0.01, -0.02]);
        let est: Vec<[f64; 2]> = nominal.iter().map(|p| a.apply(*p)).collect();
        let out = apply_prior(&est, &nominal, None, Family::Similarity);
        for (o, e) in out.iter().zip(&est) {
            assert!((o[0] - e[0]).abs() < 1e-10 && (o[1] - e[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn single_outlier_is_pulled_back() {
        let nominal = ring(51);
        let a = Transform::similarity(-3.0, 0.97, [0.005, 0.0]);
        let mut est: Vec<[f64; 2]> = nominal.iter().map(|p| a.apply(*p)).collect();
        let dk = 0.0032;
        est[7][0] += 5.0 * dk;
        let out = apply_prior(&est, &nominal, None, Family::Affine);
        let want = a.apply(nominal[7]);
        assert!((out[7][0] - want[0]).hypot(out[7][1] - want[1]) < dk);
    }

    #[test]
    fn unfit_prior_passes_through() {
        let est = vec![[0.1, 0.0]];
        assert_eq!(apply_prior(&est, &[[0.0, 0.0]], None, Family::Affine), est);
    }
}
