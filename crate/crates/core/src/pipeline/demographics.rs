use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::kb::{DiseaseOutline, Gender};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    pub gender: Gender,
    pub age: u32,
    pub age_group: String,
}

/// Draws gender by weight, an age group by weight, then a uniform integer
/// age inside that group. Relies on the outline's demographic invariants.
pub fn sample_demographics<R: Rng + ?Sized>(outline: &DiseaseOutline, rng: &mut R) -> Demographics {
    let ctx = &outline.demographic_context;

    let genders: Vec<(Gender, f64)> = ctx.gender_weights.iter().map(|(g, w)| (*g, *w)).collect();
    let gender_dist = WeightedIndex::new(genders.iter().map(|(_, w)| *w))
        .expect("outline gender weights are valid");
    let gender = genders[gender_dist.sample(rng)].0;

    let group_dist = WeightedIndex::new(ctx.age_groups.iter().map(|g| g.weight))
        .expect("outline age-group weights are valid");
    let group = &ctx.age_groups[group_dist.sample(rng)];
    let age = rng.gen_range(group.min_age..=group.max_age);

    Demographics {
        gender,
        age,
        age_group: group.label.clone(),
    }
}
