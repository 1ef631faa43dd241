//! `inspect-checkpoint`: human-readable dump of a checkpoint.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;
use coevgan::checkpoint::FORMAT_VERSION;
use coevgan::checkpoint_load;

pub fn cmd_inspect(path: &Path) -> Result<String> {
    let (pop, cfg) = checkpoint_load(path)?;
    let mut s = String::new();
    let _ = writeln!(s, "checkpoint {} (format v{FORMAT_VERSION})", path.display());
    let _ = writeln!(s, "generation {}", pop.generation);
    let _ = writeln!(s, "topology {} ({} cells, s = {})", pop.topology, pop.cells.len(), pop.topology.subpopulation_size());
    for (c, cell) in pop.cells.iter().enumerate() {
        let (g, d) = (&cell.center.generator, &cell.center.discriminator);
        let _ = writeln!(
            s,
            "cell {c}: generator {} params lr {:.6e} | discriminator {} params lr {:.6e} | adam steps {}/{}",
            g.network.param_count(),
            g.learning_rate,
            d.network.param_count(),
            d.learning_rate,
            cell.optimizers.generator.t,
            cell.optimizers.discriminator.t
        );
    }
    let _ = writeln!(s, "--- config ---");
    s.push_str(&cfg.to_toml()?);
    Ok(s)
}
