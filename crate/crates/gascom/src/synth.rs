//! Synthetic corpus generator for desk-scale experiments.
//!
//! Each discussion is a four-node chain: root, a grandparent carrying a
//! topic marker, a neutral parent, and the labeled target carrying its own
//! marker. The label is positive iff the two markers agree, so the class is
//! a function of the target AND a node two hops away: a context-free
//! classifier is capped near chance while any walk that reaches the
//! grandparent can solve the task.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embed::mix_seed;
use crate::graph::{Discussion, Label, NodeId, PostNode};
use crate::train::Corpus;

#[derive(Debug, Clone, Copy)]
pub struct SynthSpec {
    /// One labeled target per discussion.
    pub discussions: usize,
    pub seed: u64,
}

const MARKERS: [&str; 2] = ["alpha", "bravo"];

pub fn generate_synthetic_corpus(spec: &SynthSpec) -> Corpus {
    let n = spec.discussions;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, "synth"));
    // exactly balanced classes, order shuffled
    let mut classes: Vec<Label> = (0..n)
        .map(|i| if i % 2 == 0 { Label::Pos } else { Label::Neg })
        .collect();
    classes.shuffle(&mut rng);
    let mut discussions = Vec::with_capacity(n);
    for (i, class) in classes.into_iter().enumerate() {
        let target_marker = MARKERS[rng.random_range(0..2)];
        let context_marker = match class {
            Label::Pos => target_marker,
            Label::Neg => MARKERS
                .iter()
                .find(|m| **m != target_marker)
                .unwrap(),
        };
        let node = |id: &str, parent: Option<&str>, text: String, label: Option<Label>| PostNode {
            id: NodeId::new(id),
            parent: parent.map(NodeId::new),
            text,
            label,
        };
        let d = Discussion::new(
            format!("synth-{i:05}"),
            vec![
                node("n0", None, "discussion opener".into(), None),
                // shares the "bridge" token with n2 so similarity-guided
                // walks from the parent see a structurally positive score
                // (purely random cosines can clamp to epsilon and starve
                // the step toward the marker)
                node("n1", Some("n0"), format!("bridge context {context_marker}"), None),
                node("n2", Some("n1"), "bridge comment".into(), None),
                node("n3", Some("n2"), format!("reply {target_marker}"), Some(class)),
            ],
        )
        .expect("synthetic tree is valid");
        discussions.push(d);
    }
    Corpus::new(discussions)
}

pub fn corpus_to_jsonl(corpus: &Corpus) -> String {
    let mut out = String::new();
    for d in &corpus.discussions {
        out.push_str(&d.to_json_line());
        out.push('\n');
    }
    out
}
