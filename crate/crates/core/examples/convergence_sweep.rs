//! An ε sweep driven by a config, as the `sweep` subcommand runs it.

use ismf::cli;
use ismf::config::RunConfig;

const CONFIG: &str = "\
[run]
scheme = galerkin
[grid]
cells = 32, 32
[initial]
preset = tilted-cosine(0.5, 1)
[velocity]
preset = psi-sine(1, 1)
[solver]
epsilon = 0.1
modes = 16
dt = 1e-3
t_end = 0.25
[sweep]
epsilon = 0.1, 0.05, 0.025, 0.0125
";

fn main() -> ismf::Result<()> {
    let mut cfg = RunConfig::parse(CONFIG)?;
    let dir = std::env::temp_dir().join("ismf-sweep-example");
    cfg.out_dir = dir.clone();
    let (code, rows) = cli::sweep(&cfg, &mut std::io::stdout())?;
    println!("exit code {code}; table in {}", dir.join("convergence.csv").display());
    for r in rows {
        let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3e}"));
        println!("  ε = {:<7} cauchy {:>10}  ratio {:>10}  weak residual {:.3e}", r.value, opt(r.cauchy), opt(r.ratio), r.weak_residual);
    }
    Ok(())
}
