//! File formats, scenario generation, benchmarking and the command-line
//! front end around [`miopf_core`].

pub mod bench;
pub mod bundled;
pub mod case_file;
pub mod cli;
pub mod scenario;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

pub use bench::{run_benchmark, BenchConfig, BenchReport, BenchRow, Method, RatioRow};
pub use case_file::{load_case, parse_case, serialize_case, CaseError};
pub use scenario::{generate_scenario, ScenarioError, ScenarioSpec};

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| std::io::Error::other("path has no file name"))?;
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    let tmp = dir.join(format!(".{}.{}.{n}.tmp", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
