//! On-disk field cache keyed by a content hash of the solve inputs.

use std::path::{Path, PathBuf};

use hpfnav::export::{field_from_csv, field_to_csv};
use hpfnav::scenario::Scenario;
use hpfnav::{PotentialField, SolveError};
use sha2::{Digest, Sha256};

/// Bumped whenever the stored format or the solver's output changes.
const FORMAT: &str = "hpfnav-field-v1";

pub fn cache_dir(out: &Path) -> PathBuf {
    std::env::var_os("HPFNAV_CACHE").map_or_else(|| out.join("cache"), PathBuf::from)
}

/// Hash of everything the solved field depends on.
pub fn field_key(sc: &Scenario) -> String {
    let doc = &sc.doc;
    let inputs = serde_json::json!([FORMAT, doc.grid, doc.gamma, doc.bvp, doc.solver]);
    let bytes = serde_json::to_vec(&inputs).expect("scenario parts always serialize");
    hex::encode(Sha256::digest(bytes))
}

/// Loads the cached field for `sc`, or solves and stores it. Unreadable or
/// stale cache files are replaced.
pub fn load_or_solve(sc: &Scenario, dir: &Path) -> Result<PotentialField, SolveError> {
    let path = dir.join(format!("{}.csv", field_key(sc)));
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(field) = field_from_csv(&text, &sc.workspace, &sc.bvp, &sc.solver) {
            return Ok(field);
        }
    }
    let field = hpfnav::solver::solve(&sc.workspace, &sc.bvp, &sc.solver)?;
    // the cache is an optimization; failing to write it is not an error
    if std::fs::create_dir_all(dir).is_ok() {
        let tmp = path.with_extension("tmp");
        if std::fs::write(&tmp, field_to_csv(&field)).is_ok() {
            let _ = std::fs::rename(&tmp, &path);
        }
    }
    Ok(field)
}
