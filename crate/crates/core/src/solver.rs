//! Exhaustive search for conv/pool/dense architectures with an exact
//! parameter count.
//!
//! A family member is: `blocks` repetitions of `conv F 3x3 PAD relu` +
//! `maxpool 2x2` (the first block's filter count is fixed), a flatten, one
//! hidden `dense U relu`, and a `dense K softmax` head. For a fixed conv stack
//! the total is affine in `U`:
//!
//! ```text
//! total = conv_params + U·(flat + 1) + K·U + K
//! ```
//!
//! so every (blocks, filters, padding) tuple is checked in O(1) by solving for
//! `U` and testing integrality and range. The enumeration therefore covers
//! the whole family and the search is complete.

use std::fmt::Write as _;

use crate::config::ModelConfig;
use crate::layers::{param_count, Activation, LayerSpec, Padding};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Family {
    pub input_shape: [usize; 3],
    pub kernel: usize,
    pub first_filters: usize,
    pub min_blocks: usize,
    pub max_blocks: usize,
    /// Filter choices for blocks after the first, in ascending order.
    pub filter_choices: Vec<usize>,
    pub paddings: Vec<Padding>,
    pub min_units: usize,
    pub max_units: usize,
    pub num_classes: usize,
}

impl Default for Family {
    fn default() -> Self {
        Self {
            input_shape: [224, 224, 3],
            kernel: 3,
            first_filters: 32,
            min_blocks: 2,
            max_blocks: 6,
            filter_choices: vec![16, 32, 64, 128, 256],
            paddings: vec![Padding::Same, Padding::Valid],
            min_units: 1,
            max_units: 4096,
            num_classes: 8,
        }
    }
}

/// One point of the family.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Member {
    /// Filters of every block, including the fixed first one.
    pub filters: Vec<usize>,
    pub padding: Padding,
    pub units: usize,
}

impl Member {
    pub fn to_config(&self, family: &Family) -> ModelConfig {
        let mut layers = conv_stack(family, &self.filters, self.padding);
        layers.push(LayerSpec::Flatten);
        layers.push(LayerSpec::dense(self.units, Activation::Relu));
        layers.push(LayerSpec::dense(family.num_classes, Activation::Softmax));
        ModelConfig {
            input_shape: family.input_shape.to_vec(),
            layers,
        }
    }
}

fn conv_stack(family: &Family, filters: &[usize], padding: Padding) -> Vec<LayerSpec> {
    filters
        .iter()
        .flat_map(|&f| {
            [
                LayerSpec::conv(f, family.kernel, padding, Activation::Relu),
                LayerSpec::pool(2),
            ]
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct SearchOutcome {
    pub members: Vec<Member>,
    pub configs: Vec<ModelConfig>,
    /// Conv stacks enumerated (each covers every unit count).
    pub stacks_enumerated: usize,
    /// Stacks whose shapes collapse before the flatten.
    pub stacks_infeasible: usize,
    /// Human-readable account of the search.
    pub log: String,
}

/// All family members whose total parameter count equals `target`, ordered
/// by block count, then filters lexicographically, then padding.
pub fn solve_config(target: usize, family: &Family) -> SearchOutcome {
    let mut out = SearchOutcome::default();
    let k = family.num_classes;
    let mut log = String::new();
    let _ = writeln!(log, "target total parameters: {target}");
    let _ = writeln!(
        log,
        "family: input {:?}, {}x{} conv + 2x2 pool blocks {}..={}, first block {} filters, \
         other blocks {:?}, padding {:?}, hidden dense units {}..={}, {}-way softmax head",
        family.input_shape,
        family.kernel,
        family.kernel,
        family.min_blocks,
        family.max_blocks,
        family.first_filters,
        family.filter_choices,
        family
            .paddings
            .iter()
            .map(|p| p.as_str())
            .collect::<Vec<_>>(),
        family.min_units,
        family.max_units,
        k
    );
    for blocks in family.min_blocks..=family.max_blocks {
        let mut enumerated = 0;
        let mut infeasible = 0;
        let mut matches = 0;
        for rest in filter_tuples(&family.filter_choices, blocks.saturating_sub(1)) {
            let filters: Vec<usize> = std::iter::once(family.first_filters).chain(rest).collect();
            for &padding in &family.paddings {
                enumerated += 1;
                let stack = conv_stack(family, &filters, padding);
                let report = match param_count(&stack, &family.input_shape) {
                    Ok(r) => r,
                    Err(_) => {
                        infeasible += 1;
                        continue;
                    }
                };
                let conv_params = report.totals.total;
                let flat: usize = report
                    .layers
                    .last()
                    .map(|l| l.output_shape.iter().product())
                    .unwrap_or(0);
                let fixed = conv_params + k;
                if target <= fixed {
                    continue;
                }
                let per_unit = flat + 1 + k;
                let rem = target - fixed;
                if rem % per_unit != 0 {
                    continue;
                }
                let units = rem / per_unit;
                if !(family.min_units..=family.max_units).contains(&units) {
                    continue;
                }
                matches += 1;
                let member = Member {
                    filters: filters.clone(),
                    padding,
                    units,
                };
                let _ = writeln!(
                    log,
                    "match: blocks={blocks} filters={:?} padding={} flatten={flat} units={units} \
                     conv_params={conv_params}",
                    member.filters, padding
                );
                out.configs.push(member.to_config(family));
                out.members.push(member);
            }
        }
        let _ = writeln!(
            log,
            "blocks={blocks}: {enumerated} stacks enumerated, {infeasible} shape-infeasible, {matches} matches"
        );
        out.stacks_enumerated += enumerated;
        out.stacks_infeasible += infeasible;
    }
    let _ = writeln!(
        log,
        "search complete: {} stacks enumerated, {} infeasible, {} configurations with exactly {target} parameters",
        out.stacks_enumerated,
        out.stacks_infeasible,
        out.members.len()
    );
    out.log = log;
    out
}

/// All tuples of `len` items from `choices`, in lexicographic order.
fn filter_tuples(choices: &[usize], len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                choices.iter().map(move |&c| {
                    let mut next = prefix.clone();
                    next.push(c);
                    next
                })
            })
            .collect();
    }
    out
}
