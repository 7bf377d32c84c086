//! Helpers shared by the acceptance run: in-process command invocation,
//! report parsing and error metrics for the kernel oracles.

/// Runs `mmlpc <args>` in-process and returns its report, or a message
/// naming the command and its exit status.
pub fn run_ok(args: &[&str]) -> Result<String, String> {
    let mut out = Vec::new();
    let argv = std::iter::once("mmlpc").chain(args.iter().copied());
    let status = mmlpc_cli::run(argv, &mut out);
    let text = String::from_utf8_lossy(&out).into_owned();
    if status != 0 {
        return Err(format!("`mmlpc {}` exited with status {status}:\n{text}", args.join(" ")));
    }
    Ok(text)
}

/// Number following `key` on the first line that starts with it; a trailing
/// `x` or unit word is ignored.
pub fn field(report: &str, key: &str) -> Result<f64, String> {
    let line = report
        .lines()
        .find_map(|l| l.trim().strip_prefix(key))
        .ok_or_else(|| format!("no '{key}' line in output:\n{report}"))?;
    line.split_whitespace()
        .next()
        .and_then(|t| t.trim_end_matches('x').parse().ok())
        .ok_or_else(|| format!("cannot parse number from '{key}{line}'"))
}

/// Largest absolute error divided by the largest reference magnitude.
pub fn norm_rel_err(got: &[f32], want: &[f64]) -> f64 {
    let scale = want.iter().fold(0f64, |m, v| m.max(v.abs())).max(1e-30);
    got.iter().zip(want).map(|(g, w)| (*g as f64 - w).abs()).fold(0.0, f64::max) / scale
}

/// Largest `|got - want| / max(1, |want|)`: absolute near zero, relative above one.
pub fn mixed_err(got: &[f32], want: &[f64]) -> f64 {
    got.iter().zip(want).map(|(g, w)| (*g as f64 - w).abs() / w.abs().max(1.0)).fold(0.0, f64::max)
}
