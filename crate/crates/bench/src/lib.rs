//! Fixtures shared by the criterion benches in `benches/`.

use frontmol_core::benchmarks::{barenblatt, AnalyticSolution};
use frontmol_core::meshing::{Mesh, MeshSpec};
use frontmol_core::problem::regularize_initial_profile;
use frontmol_core::semidiscrete::{Guards, RhsContext};

/// Barenblatt (`n = 6`) right-hand side on a D4 mesh and its packed initial state.
pub fn barenblatt_rhs(n: usize, m: usize) -> (RhsContext, Vec<f64>) {
    let problem = barenblatt(6.0).problem();
    let mesh = Mesh::build(&MeshSpec::Geometric { n, m }).expect("valid mesh");
    let ctx = RhsContext::new(problem.clone(), mesh.clone(), Guards::default()).expect("valid problem");
    let (w, s0) = regularize_initial_profile(&problem.initial, 1e-6, &mesh, &ctx.transform).expect("profile");
    let y = ctx.pack(&w, s0);
    (ctx, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_evaluates() {
        let (ctx, y) = barenblatt_rhs(20, 10);
        let mut d = vec![0.0; y.len()];
        ctx.rhs(0.0, &y, &mut d).unwrap();
        assert!(d.iter().all(|v| v.is_finite()));
        assert!(*d.last().unwrap() > 0.0);
    }
}
