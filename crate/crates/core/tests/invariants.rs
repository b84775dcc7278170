use aaa::crossfit::make_folds;
use aaa::domain::{psi, DiscreteDgp, Form, PointLaw};
use aaa::oracle::{exact_mean_f, exact_theta0, exact_v_eff_form, f_prospective, f_retrospective};
use proptest::prelude::*;

fn law() -> impl Strategy<Value = PointLaw> {
    prop::array::uniform4(0.05f64..1.0).prop_map(|c| {
        let s: f64 = c.iter().sum();
        PointLaw {
            cells: [[c[0] / s, c[1] / s], [c[2] / s, c[3] / s]],
        }
    })
}

fn dgp() -> impl Strategy<Value = DiscreteDgp> {
    prop::collection::vec((0.05f64..1.0, law()), 1..6).prop_map(|pts| {
        let total: f64 = pts.iter().map(|p| p.0).sum();
        let px = pts.iter().map(|p| p.0 / total).collect();
        let laws = pts.into_iter().map(|p| p.1).collect();
        DiscreteDgp::indexed(px, laws, 1e-3).expect("interior law")
    })
}

proptest! {
    #[test]
    fn influence_functions_coincide(d in dgp()) {
        let theta0 = exact_theta0(&d);
        for l in d.laws() {
            for y in 0..2u8 {
                for t in 0..2u8 {
                    let a = f_prospective(l, y, t, theta0);
                    let b = f_retrospective(l, y, t, theta0);
                    prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
                }
            }
        }
        prop_assert!(exact_mean_f(&d, Form::Prospective).abs() < 1e-10);
        let vp = exact_v_eff_form(&d, Form::Prospective);
        let vr = exact_v_eff_form(&d, Form::Retrospective);
        prop_assert!((vp - vr).abs() <= 1e-9 * vp);
    }

    #[test]
    fn score_is_symmetric_in_roles(l in law(), y in 0..2u8, t in 0..2u8) {
        // swapping the roles of y and t maps the prospective score of one
        // law to the retrospective score of the transposed law
        let tr = PointLaw { cells: [[l.cells[0][0], l.cells[1][0]], [l.cells[0][1], l.cells[1][1]]] };
        let [p0, p1, w] = l.nuisance(Form::Prospective);
        let [q0, q1, v] = tr.nuisance(Form::Retrospective);
        let a = psi(Form::Prospective, y, t, p0, p1, w).unwrap();
        let b = psi(Form::Retrospective, y, t, q0, q1, v).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn folds_partition_records(n in 2usize..300, k in 2usize..12, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let f = make_folds(n, k, seed).unwrap();
        let sizes = f.sizes();
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut seen = vec![false; n];
        for j in 0..k {
            for i in f.fold(j) {
                prop_assert!(!seen[i]);
                seen[i] = true;
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
    }
}
