use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{IngredientError, IngredientSet, TrainConfig};
use crate::gnn::{load_checkpoint, save_checkpoint, ModelSpec};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SHARED_INIT_FILE: &str = "shared_init.gskp";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngredientEntry {
    pub file: String,
    pub seed: u64,
    pub val_acc: f64,
    pub train_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: ModelSpec,
    pub config: TrainConfig,
    pub workers: usize,
    pub shared_init: String,
    pub ingredients: Vec<IngredientEntry>,
}

pub fn ingredient_file(i: usize) -> String {
    format!("ingredient_{i:03}.gskp")
}

/// Writes `ingredient_{i:03}.gskp`, the shared initialization and
/// `manifest.json` into `dir` (created if missing).
pub fn save_ingredients(
    set: &IngredientSet,
    config: &TrainConfig,
    workers: usize,
    dir: impl AsRef<Path>,
) -> Result<Manifest, IngredientError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    save_checkpoint(&set.shared_init, dir.join(SHARED_INIT_FILE))?;
    let mut ingredients = Vec::with_capacity(set.members.len());
    for (i, member) in set.members.iter().enumerate() {
        let file = ingredient_file(i);
        save_checkpoint(member, dir.join(&file))?;
        ingredients.push(IngredientEntry {
            file,
            seed: config.seed_base.wrapping_add(i as u64),
            val_acc: set.val_accs[i],
            train_seconds: set.train_times[i],
        });
    }
    let manifest = Manifest {
        spec: *set.shared_init.spec(),
        config: *config,
        workers,
        shared_init: SHARED_INIT_FILE.into(),
        ingredients,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| IngredientError::Store(e.to_string()))?;
    std::fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(manifest)
}

/// Loads the members of an ingredient directory. With a manifest the listed
/// files are read in manifest order; without one every `ingredient_*.gskp` is
/// read in file-name order.
pub fn load_ingredients(
    dir: impl AsRef<Path>,
) -> Result<Vec<crate::gnn::ModelParams>, IngredientError> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let files: Vec<PathBuf> = if manifest_path.exists() {
        let text = std::fs::read_to_string(&manifest_path)?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| IngredientError::Store(format!("{MANIFEST_FILE}: {e}")))?;
        manifest
            .ingredients
            .iter()
            .map(|e| dir.join(&e.file))
            .collect()
    } else {
        let mut found: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("ingredient_") && n.ends_with(".gskp"))
            })
            .collect();
        found.sort();
        found
    };
    if files.is_empty() {
        return Err(IngredientError::Store(format!(
            "no ingredients in {}",
            dir.display()
        )));
    }
    let members = files
        .iter()
        .map(|f| {
            load_checkpoint(f).map_err(|e| IngredientError::Store(format!("{}: {e}", f.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if members.windows(2).any(|w| !w[0].is_compatible(&w[1])) {
        return Err(IngredientError::Store(
            "ingredients have different model specs".into(),
        ));
    }
    Ok(members)
}
