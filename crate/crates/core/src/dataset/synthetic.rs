//! A small hand-authored corpus with one tuple per (goal, error type).
//!
//! Each goal has a nine-step pool, a step that does not belong and a step that
//! is missing. Error type `e` first drops pool step `e + 2`, so no two tuples
//! share a script, then introduces its error into the remaining chain.

use super::{EvalTuple, Split};
use crate::edit::{EditCommand, ErrorType};
use crate::engine::apply;
use crate::script::Script;

pub struct GoalPool {
    pub goal: &'static str,
    pub steps: [&'static str; 9],
    pub wrong: &'static str,
    /// Belongs between steps 3 and 4 of the shortened chain.
    pub missing: &'static str,
}

pub const GOALS: [GoalPool; 10] = [
    GoalPool {
        goal: "bake a cake",
        steps: [
            "gather the ingredients",
            "grease the pan",
            "crack eggs into a bowl",
            "whisk the batter",
            "pour batter into the pan",
            "put the pan in the oven",
            "wait for the timer",
            "take out the cake",
            "frost the cake",
        ],
        wrong: "paint the garage door",
        missing: "preheat the oven",
    },
    GoalPool {
        goal: "see an alligator",
        steps: [
            "decide to see an alligator",
            "find the car keys",
            "pack a water bottle",
            "get in the car",
            "drive to the zoo",
            "park near the entrance",
            "buy a ticket",
            "find the reptile house",
            "watch the alligator",
        ],
        wrong: "bake cookies for neighbors",
        missing: "follow the highway signs",
    },
    GoalPool {
        goal: "plant a tree",
        steps: [
            "choose a sunny spot",
            "buy a sapling",
            "fetch a shovel",
            "dig a deep hole",
            "loosen the roots",
            "place the sapling in the hole",
            "fill the hole with soil",
            "water the sapling",
            "spread mulch around the trunk",
        ],
        wrong: "polish the silverware",
        missing: "remove the plastic pot",
    },
    GoalPool {
        goal: "make tea",
        steps: [
            "fill the kettle",
            "fetch a mug",
            "choose a tea bag",
            "boil the water",
            "put the tea bag in the mug",
            "pour hot water into the mug",
            "steep for three minutes",
            "stir in honey",
            "sip the tea",
        ],
        wrong: "vacuum the hallway rug",
        missing: "wait for the kettle to whistle",
    },
    GoalPool {
        goal: "wash clothes",
        steps: [
            "collect the dirty laundry",
            "sort lights from darks",
            "check the pockets",
            "load the washing machine",
            "add detergent",
            "start the wash cycle",
            "move clothes to the dryer",
            "fold the clean clothes",
            "put the clothes away",
        ],
        wrong: "water the houseplants",
        missing: "close the machine lid",
    },
    GoalPool {
        goal: "catch a flight",
        steps: [
            "book a plane ticket",
            "pack a suitcase",
            "print the boarding pass",
            "take a taxi to the airport",
            "check the suitcase at the counter",
            "pass through security",
            "walk to the gate",
            "board the plane",
            "find your seat",
        ],
        wrong: "mow the front lawn",
        missing: "show your passport",
    },
    GoalPool {
        goal: "write a letter",
        steps: [
            "find a pen",
            "get a sheet of paper",
            "think about what to say",
            "write the greeting",
            "write the message",
            "sign your name",
            "fold the letter",
            "put the letter in an envelope",
            "mail the envelope",
        ],
        wrong: "feed the goldfish",
        missing: "reread the message for typos",
    },
    GoalPool {
        goal: "clean the kitchen",
        steps: [
            "clear the counters",
            "gather the dirty dishes",
            "fill the sink with soapy water",
            "wash the dishes",
            "dry the dishes",
            "wipe down the counters",
            "sweep the floor",
            "mop the tiles",
            "take out the trash",
        ],
        wrong: "tune the guitar",
        missing: "put the dishes in the cupboard",
    },
    GoalPool {
        goal: "go swimming",
        steps: [
            "pack a swimsuit",
            "grab a towel",
            "drive to the pool",
            "pay the entrance fee",
            "change in the locker room",
            "take a quick shower",
            "put on goggles",
            "swim ten laps",
            "dry off with the towel",
        ],
        wrong: "repaint the mailbox",
        missing: "lock the locker",
    },
    GoalPool {
        goal: "buy groceries",
        steps: [
            "write a shopping list",
            "grab reusable bags",
            "drive to the store",
            "take a cart",
            "pick up fresh vegetables",
            "choose a loaf of bread",
            "wait in the checkout line",
            "pay the cashier",
            "load the bags into the car",
        ],
        wrong: "iron the curtains",
        missing: "weigh the vegetables",
    },
];

/// Chain with nodes `a` and `b` (consecutive in `labels`) unordered.
fn with_parallel(goal: &str, labels: &[&str], a: usize) -> Script {
    let n = labels.len();
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).filter(|&e| e != (a, a + 1)).collect();
    if a > 0 {
        edges.retain(|&e| e != (a - 1, a));
        edges.push((a - 1, a));
        edges.push((a - 1, a + 1));
    }
    if a + 2 < n {
        edges.retain(|&e| e != (a + 1, a + 2));
        edges.push((a, a + 2));
        edges.push((a + 1, a + 2));
    }
    Script::new(goal, labels, edges).expect("parallel pair keeps the script acyclic")
}

fn tuple(g: usize, pool: &GoalPool, error_type: ErrorType) -> EvalTuple {
    let e = ErrorType::ALL.iter().position(|t| *t == error_type).unwrap();
    let goal = pool.goal;
    let base: Vec<&str> = pool
        .steps
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != e + 2)
        .map(|(_, s)| *s)
        .collect();
    let chain = |labels: &[&str]| Script::chain(goal, labels).unwrap();
    let (x, edit, feedbacks) = match error_type {
        ErrorType::MissingStep => {
            let (prev, next) = (base[3], base[4]);
            if g % 2 == 0 {
                (
                    chain(&base),
                    EditCommand::insert_before(pool.missing, next),
                    vec![format!("you need to {} before you {next}", pool.missing)],
                )
            } else {
                (
                    chain(&base),
                    EditCommand::insert_after(pool.missing, prev),
                    vec![format!("after you {prev}, then {}", pool.missing)],
                )
            }
        }
        ErrorType::WrongStep => {
            let mut labels = base.clone();
            labels.insert(5, pool.wrong);
            (
                chain(&labels),
                EditCommand::remove(pool.wrong),
                vec![
                    format!("you don't need to {} in order to {goal}", pool.wrong),
                    format!("the following step is not right: {}", pool.wrong),
                ],
            )
        }
        ErrorType::WrongOrder => {
            let (a, b) = (base[5], base[6]);
            let mut labels = base.clone();
            labels.swap(5, 6);
            (
                chain(&labels),
                EditCommand::reorder(b, a),
                vec![format!("you must {a} before you {b}")],
            )
        }
        ErrorType::RemovePartialOrder => {
            let (a, b) = (base[3], base[4]);
            (
                with_parallel(goal, &base, 3),
                EditCommand::remove_partial_order(a, b),
                vec![format!("you have to {a} before you {b}")],
            )
        }
        ErrorType::AddPartialOrder => {
            let (a, b) = (base[1], base[2]);
            (
                chain(&base),
                EditCommand::add_partial_order(a, b),
                vec![format!("{a} and {b} can happen in any order")],
            )
        }
    };
    let y = apply(&x, &edit).expect("synthetic edit applies");
    EvalTuple {
        id: format!("syn-{:02}-{}", g, error_type.as_str()),
        goal: goal.to_owned(),
        script_x: x,
        feedbacks,
        gold_edit: edit,
        script_y: y,
        error_type,
        split: Split::Test,
        iset_source_id: None,
    }
}

/// The 50-tuple corpus, ordered by goal then error type.
pub fn corpus() -> Vec<EvalTuple> {
    GOALS
        .iter()
        .enumerate()
        .flat_map(|(g, pool)| ErrorType::ALL.into_iter().map(move |t| tuple(g, pool, t)))
        .collect()
}

/// The corpus as shipped in `data/synthetic.jsonl`.
pub const BUNDLED_JSONL: &str = include_str!("../../data/synthetic.jsonl");

/// Example substitution table covering lexical and analogical perturbations.
pub const EXAMPLE_PERTURBATIONS: &str = include_str!("../../data/perturbations.example.json");
