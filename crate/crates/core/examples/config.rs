//! Parses a run configuration, applies overrides, and renders it back.

use std::path::Path;

use selfprior::config::RunConfig;

const TEXT: &str = "\
# comments and blank lines are ignored
init = coarse-shell
iterations = 400
max_levels = 3

initial_faces = 800
";

fn main() -> selfprior::Result<()> {
    let mut cfg = RunConfig::parse(TEXT, Path::new("example.cfg"))?;
    cfg.set("seed", "42")?;
    cfg.set("weight_beam", "0")?;
    cfg.validate()?;
    print!("{}", cfg.render());

    let again = RunConfig::parse(&cfg.render(), Path::new("rendered.cfg"))?;
    println!("# round trip identical: {}", again == cfg);

    match RunConfig::parse("iterations = many\n", Path::new("bad.cfg")) {
        Err(e) => println!("# {e}"),
        Ok(_) => unreachable!("bad value parsed"),
    }
    Ok(())
}
