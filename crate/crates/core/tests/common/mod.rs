//! Seeded generator of valid in-tree models for property tests.

#![allow(dead_code)]

use std::collections::BTreeSet;

use bipan::model::{BiPanModel, ModelParts, ProductKind};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MAX_NODES: usize = 50;

const SKILLS: [&str; 5] = [
    "manipulation",
    "screwing",
    "connecting-cables",
    "welding",
    "gluing",
];

struct Gen {
    rng: ChaCha8Rng,
    parts: ModelParts,
    used: usize,
    /// nodes promised to stages that have not been expanded yet
    reserved: usize,
    budget: usize,
    process_names: Vec<usize>,
    product_names: Vec<usize>,
    skills_used: BTreeSet<&'static str>,
}

impl Gen {
    fn next_process(&mut self) -> String {
        format!("p{}", self.process_names.pop().expect("process ids"))
    }

    fn next_product(&mut self, prefix: &str) -> String {
        format!("{prefix}{}", self.product_names.pop().expect("product ids"))
    }

    /// Adds a process producing `product` and recursively its inputs.
    fn expand(&mut self, product: &str) {
        let process = self.next_process();
        self.reserved -= 2;
        self.used += 1;
        self.parts = std::mem::take(&mut self.parts)
            .process(&process, &format!("Process {process}"))
            .output(&process, product);

        if self.rng.gen_bool(0.95) {
            let n = self.rng.gen_range(1..=3);
            let mut skills: Vec<&'static str> =
                SKILLS.choose_multiple(&mut self.rng, n).copied().collect();
            skills.sort();
            for s in skills {
                if self.skills_used.insert(s) {
                    self.parts = std::mem::take(&mut self.parts).skill(s, s);
                }
                self.parts = std::mem::take(&mut self.parts).requires(&process, s);
            }
        }

        let wanted = self.rng.gen_range(1..=4);
        let mut leaves = Vec::new();
        let mut stages = Vec::new();
        for _ in 0..wanted {
            let room = self.budget - self.used - self.reserved;
            if room < 1 {
                break;
            }
            if self.rng.gen_bool(0.4) && room >= 3 {
                let stage = self.next_product("s");
                self.used += 1;
                self.reserved += 2;
                self.parts = std::mem::take(&mut self.parts)
                    .product(&stage, &format!("Stage {stage}"), ProductKind::Stage)
                    .input(&stage, &process);
                stages.push(stage);
            } else {
                let kind = *[
                    ProductKind::Elementary,
                    ProductKind::SubProduct,
                    ProductKind::Fastener,
                ]
                .choose(&mut self.rng)
                .expect("kinds");
                let prefix = match kind {
                    ProductKind::Fastener => "f",
                    ProductKind::SubProduct => "m",
                    _ => "e",
                };
                let leaf = self.next_product(prefix);
                self.used += 1;
                self.parts = std::mem::take(&mut self.parts)
                    .product(&leaf, &format!("Part {leaf}"), kind)
                    .input(&leaf, &process);
                leaves.push((leaf, kind));
            }
        }

        let fastener = leaves
            .iter()
            .find(|(_, k)| *k == ProductKind::Fastener)
            .map(|(id, _)| id.clone());
        if let Some(fastener) = fastener {
            let others: Vec<&str> = leaves
                .iter()
                .map(|(id, _)| id.as_str())
                .chain(stages.iter().map(String::as_str))
                .filter(|id| *id != fastener)
                .collect();
            if !others.is_empty() && self.rng.gen_bool(0.5) {
                self.parts = std::mem::take(&mut self.parts).fastens(&fastener, &others, &[]);
            }
        }

        for stage in stages {
            self.expand(&stage);
        }
    }
}

/// A valid model with at most [`MAX_NODES`] nodes, fully determined by `seed`.
pub fn random_model(seed: u64) -> BiPanModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut process_names: Vec<usize> = (0..MAX_NODES).collect();
    let mut product_names: Vec<usize> = (0..MAX_NODES).collect();
    process_names.shuffle(&mut rng);
    product_names.shuffle(&mut rng);
    let budget = rng.gen_range(3..=MAX_NODES - SKILLS.len());
    let mut gen = Gen {
        rng,
        parts: ModelParts::new(format!("random-{seed}")),
        used: 1,
        reserved: 2,
        budget,
        process_names,
        product_names,
        skills_used: BTreeSet::new(),
    };
    gen.parts =
        std::mem::take(&mut gen.parts).product("final", "Final product", ProductKind::Final);
    gen.expand("final");
    gen.parts
        .build()
        .expect("generated model is reference-complete")
}

/// Total number of nodes of every type.
pub fn node_count(model: &BiPanModel) -> usize {
    model.products().count() + model.processes().count() + model.skills().count()
}
