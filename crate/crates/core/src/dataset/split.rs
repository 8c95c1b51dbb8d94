use std::collections::BTreeSet;

use super::{DatasetError, SegmentSample};

/// Indices into the dataset for one cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub test_families: Vec<String>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Three folds split by graft family: families are sorted by name and dealt
/// round-robin into three groups, each group serving once as the test set.
pub fn crossval_split(dataset: &[SegmentSample]) -> Result<Vec<Fold>, DatasetError> {
    let families: Vec<&str> = dataset.iter().map(|s| s.graft_id.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    if families.len() < 3 {
        return Err(DatasetError::InsufficientFamilies { found: families.len() });
    }
    let group_of = |name: &str| families.iter().position(|f| *f == name).expect("family listed") % 3;
    Ok((0..3)
        .map(|g| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..dataset.len()).partition(|&i| group_of(&dataset[i].graft_id) == g);
            Fold {
                test_families: families.iter().enumerate().filter(|(i, _)| i % 3 == g).map(|(_, f)| f.to_string()).collect(),
                train,
                test,
            }
        })
        .collect())
}
