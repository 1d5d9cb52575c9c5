use std::fmt;
use std::str::FromStr;

use super::{Interactions, LearnerError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnerKind {
    Logistic,
    Linear,
    Tree,
    Forest,
    CvEnsemble,
}

impl LearnerKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Logistic => "logistic",
            Self::Linear => "linear",
            Self::Tree => "tree",
            Self::Forest => "forest",
            Self::CvEnsemble => "cv-ensemble",
        }
    }
}

impl FromStr for LearnerKind {
    type Err = LearnerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "logistic" => Self::Logistic,
            "linear" => Self::Linear,
            "tree" => Self::Tree,
            "forest" => Self::Forest,
            "cv-ensemble" | "ensemble" => Self::CvEnsemble,
            _ => return Err(LearnerError::Parse(s.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    /// Linear and logistic models only.
    pub interactions: Interactions,
    /// Penalty added to the Gram matrix diagonal of linear models.
    pub ridge: f64,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub n_trees: usize,
    /// Features tried per split; forests default to `floor(sqrt(p))`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub cv_folds: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            interactions: Interactions::None,
            ridge: 1e-8,
            max_depth: None,
            min_leaf: 5,
            n_trees: 500,
            max_features: None,
            bootstrap: true,
            cv_folds: 5,
        }
    }
}

/// Learner kind, hyperparameters and seed. Text form is
/// `kind[:key=value,...]`, e.g. `forest:n_trees=200,min_leaf=5,seed=3`.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub params: Hyperparameters,
    pub seed: u64,
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind) -> Self {
        Self { kind, params: Hyperparameters::default(), seed: 0 }
    }

    pub fn with_interactions(mut self, interactions: Interactions) -> Self {
        self.params.interactions = interactions;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, LearnerError> {
    value.parse().map_err(|_| LearnerError::Parse(format!("{key}={value}")))
}

impl FromStr for LearnerSpec {
    type Err = LearnerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s.trim().split_once(':').unwrap_or((s.trim(), ""));
        let mut spec = LearnerSpec::new(kind.trim().parse()?);
        for pair in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = pair.split_once('=').ok_or_else(|| LearnerError::Parse(pair.to_string()))?;
            let (key, value) = (key.trim(), value.trim());
            let p = &mut spec.params;
            match key {
                "interactions" => p.interactions = value.parse()?,
                "ridge" => p.ridge = parse_value(key, value)?,
                "max_depth" => p.max_depth = Some(parse_value(key, value)?),
                "min_leaf" => p.min_leaf = parse_value(key, value)?,
                "n_trees" => p.n_trees = parse_value(key, value)?,
                "max_features" => p.max_features = Some(parse_value(key, value)?),
                "bootstrap" => p.bootstrap = parse_value(key, value)?,
                "cv_folds" => p.cv_folds = parse_value(key, value)?,
                "seed" => spec.seed = parse_value(key, value)?,
                _ => return Err(LearnerError::Parse(pair.to_string())),
            }
        }
        if spec.params.min_leaf == 0 || spec.params.n_trees == 0 || spec.params.max_features == Some(0) {
            return Err(LearnerError::Parse(s.to_string()));
        }
        Ok(spec)
    }
}

impl fmt::Display for LearnerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = Hyperparameters::default();
        let p = &self.params;
        let mut parts = Vec::new();
        if p.interactions != d.interactions {
            parts.push(format!("interactions={}", p.interactions));
        }
        if p.ridge != d.ridge {
            parts.push(format!("ridge={}", p.ridge));
        }
        if let Some(depth) = p.max_depth {
            parts.push(format!("max_depth={depth}"));
        }
        if p.min_leaf != d.min_leaf {
            parts.push(format!("min_leaf={}", p.min_leaf));
        }
        if p.n_trees != d.n_trees {
            parts.push(format!("n_trees={}", p.n_trees));
        }
        if let Some(m) = p.max_features {
            parts.push(format!("max_features={m}"));
        }
        if p.bootstrap != d.bootstrap {
            parts.push(format!("bootstrap={}", p.bootstrap));
        }
        if p.cv_folds != d.cv_folds {
            parts.push(format!("cv_folds={}", p.cv_folds));
        }
        if self.seed != 0 {
            parts.push(format!("seed={}", self.seed));
        }
        if parts.is_empty() {
            write!(f, "{}", self.kind.name())
        } else {
            write!(f, "{}:{}", self.kind.name(), parts.join(","))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_key_values() {
        let s: LearnerSpec = "forest:n_trees=200, min_leaf=3,seed=9,bootstrap=false".parse().unwrap();
        assert_eq!(s.kind, LearnerKind::Forest);
        assert_eq!(s.params.n_trees, 200);
        assert_eq!(s.params.min_leaf, 3);
        assert!(!s.params.bootstrap);
        assert_eq!(s.seed, 9);
        assert!("boosting".parse::<LearnerSpec>().is_err());
        assert!("tree:depth=3".parse::<LearnerSpec>().is_err());
        assert!("tree:min_leaf=0".parse::<LearnerSpec>().is_err());
    }

    proptest! {
        #[test]
        fn text_form_round_trips(
            kind in 0usize..5,
            inter in 0usize..3,
            depth in proptest::option::of(0usize..20),
            min_leaf in 1usize..50,
            n_trees in 1usize..1000,
            seed in any::<u64>(),
        ) {
            let kinds = [LearnerKind::Logistic, LearnerKind::Linear, LearnerKind::Tree, LearnerKind::Forest, LearnerKind::CvEnsemble];
            let inters = [Interactions::None, Interactions::Pairwise, Interactions::LastColumn];
            let mut spec = LearnerSpec::new(kinds[kind]).with_interactions(inters[inter]).with_seed(seed);
            spec.params.max_depth = depth;
            spec.params.min_leaf = min_leaf;
            spec.params.n_trees = n_trees;
            let back: LearnerSpec = spec.to_string().parse().unwrap();
            prop_assert_eq!(back, spec);
        }
    }
}
