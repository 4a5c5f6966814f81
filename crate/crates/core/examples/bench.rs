//! Prints the operator timing table for the default widths.

fn main() -> holorank::Result<()> {
    let t = std::time::Instant::now();
    let report = holorank::bench::run_bench(&holorank::bench::BenchConfig::default())?;
    print!("{}", report.to_table());
    println!("total {:.1}s", t.elapsed().as_secs_f64());
    Ok(())
}
