//! Lanczos against the dense Jacobi oracle on named fixtures.
//!
//!     cargo run --example eigensolver -- [fixture] [m]

use spectral_vmamba::eigensolver::{dense_eig_oracle, lanczos_smallest, EigConfig};
use spectral_vmamba::fixtures;

fn main() -> spectral_vmamba::Result<()> {
    let mut args = std::env::args().skip(1);
    let names: Vec<String> = match args.next() {
        Some(n) => vec![n],
        None => ["p3", "path:50", "grid:14x14", "two-component:20,30", "two-cluster:200,5,1"]
            .map(String::from)
            .to_vec(),
    };
    let m: usize = args.next().map_or(4, |s| s.parse().expect("m"));
    for name in names {
        let l = fixtures::by_name(&name)?;
        let m = m.min(l.n());
        let (basis, report) = lanczos_smallest(&l, &EigConfig { dense_threshold: 0, ..EigConfig::with_m(m) })?;
        let oracle = dense_eig_oracle(&l.to_dense(), l.n())?;
        let gap = (0..m).map(|j| (basis.values()[j] - oracle.values[j]).abs()).fold(0.0, f64::max);
        println!(
            "{name:>22}: n={:<4} steps={:<4} probes={} max gap={gap:.1e} lambda={:?}",
            l.n(),
            report.iterations,
            report.probes,
            basis.values().iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>()
        );
    }
    Ok(())
}
