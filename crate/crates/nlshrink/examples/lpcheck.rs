//! Temporary: cross-check the bundled simplex against dumped LPs.
use nlshrink::lp::{solve, LinearProgram};

fn arr(v: &serde_json::Value, sign: f64) -> Vec<f64> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap_or(sign * f64::INFINITY))
        .collect()
}

fn main() {
    let dir = std::env::args().nth(1).unwrap();
    let mut paths: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    for path in paths {
        let d: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let lp = LinearProgram {
            objective: arr(&d["objective"], 1.0),
            rows: d["rows"]
                .as_array()
                .unwrap()
                .iter()
                .map(|r| arr(r, 1.0))
                .collect(),
            row_lower: arr(&d["row_lower"], -1.0),
            row_upper: arr(&d["row_upper"], 1.0),
            lower: arr(&d["lower"], -1.0),
            upper: arr(&d["upper"], 1.0),
        };
        let t0 = std::time::Instant::now();
        match solve(&lp) {
            Ok(sol) => println!(
                "{}: obj={:.10} iters={} {:.1}ms",
                path.file_name().unwrap().to_string_lossy(),
                sol.objective,
                sol.iterations,
                t0.elapsed().as_secs_f64() * 1e3
            ),
            Err(e) => println!(
                "{}: ERROR {e}",
                path.file_name().unwrap().to_string_lossy()
            ),
        }
    }
}
