//! The SQL placement-test example: a 20-item bank with unit discrimination and
//! difficulties 0.1, 0.2, ..., 2.0, answered wrongly at items 1, 4, 7, 8, 15,
//! 16, 18 and 19.

use crate::ims::{ItemDefinition, ModelError, Repository};
use crate::irt::{ItemParameters, Response};

pub const SQL_COMPETENCE: &str = include_str!("../fixtures/sql-repo/competences/sql.xml");
pub const RELATIONAL_ALGEBRA_COMPETENCE: &str = include_str!("../fixtures/sql-repo/competences/relational-algebra.xml");
pub const SQL_ITEM_BANK: &str = include_str!("../fixtures/sql-repo/items/sql.xml");
pub const RELATIONAL_ALGEBRA_ITEM_BANK: &str = include_str!("../fixtures/sql-repo/items/relational-algebra.xml");
pub const SAMPLE_LEARNER: &str = include_str!("../fixtures/sql-repo/learners/learner-001.xml");

pub const SQL_COMPETENCE_ID: &str = "sql";
pub const SAMPLE_LEARNER_ID: &str = "learner-001";

/// 1-based positions of the incorrectly answered questions.
pub const INCORRECT_ITEMS: [usize; 8] = [1, 4, 7, 8, 15, 16, 18, 19];

/// Number of questions in the worked example.
pub const ITEM_COUNT: usize = 20;

/// Starting ability used by the worked example.
pub const THETA_INITIAL: f64 = 1.0;

/// Score of question `i` (1-based) in the worked example.
pub fn score(i: usize) -> u8 {
    u8::from(!INCORRECT_ITEMS.contains(&i))
}

/// Difficulty of question `i` (1-based).
pub fn difficulty(i: usize) -> f64 {
    i as f64 / 10.0
}

/// The worked-example response vector.
pub fn responses() -> Vec<Response> {
    (1..=ITEM_COUNT)
        .map(|i| {
            let item = ItemParameters::new(1.0, difficulty(i)).expect("fixture parameters are valid");
            Response::scored(item, score(i)).expect("fixture scores are 0/1")
        })
        .collect()
}

/// All fixture documents: two competences, their item banks and one learner.
pub fn documents() -> [&'static str; 5] {
    [
        RELATIONAL_ALGEBRA_COMPETENCE,
        SQL_COMPETENCE,
        RELATIONAL_ALGEBRA_ITEM_BANK,
        SQL_ITEM_BANK,
        SAMPLE_LEARNER,
    ]
}

pub fn repository() -> Result<Repository, ModelError> {
    Repository::from_documents(documents())
}

/// The choice a learner following the worked example picks for `item`:
/// the correct one, or the first wrong one for the questions answered wrongly.
pub fn scripted_choice(item: &ItemDefinition) -> String {
    let position: usize = item.id.trim_start_matches('q').parse().unwrap_or(0);
    if score(position) == 1 {
        item.correct_choice.clone()
    } else {
        item.choices
            .iter()
            .find(|c| c.id != item.correct_choice)
            .map(|c| c.id.clone())
            .expect("items have at least two choices")
    }
}

/// Writes the fixture repository into `dir`, mirroring the on-disk layout.
pub fn write_repository(dir: &std::path::Path) -> std::io::Result<()> {
    let files = [
        ("competences/sql.xml", SQL_COMPETENCE),
        ("competences/relational-algebra.xml", RELATIONAL_ALGEBRA_COMPETENCE),
        ("items/sql.xml", SQL_ITEM_BANK),
        ("items/relational-algebra.xml", RELATIONAL_ALGEBRA_ITEM_BANK),
        ("learners/learner-001.xml", SAMPLE_LEARNER),
    ];
    for (rel, body) in files {
        let path = dir.join(rel);
        std::fs::create_dir_all(path.parent().expect("relative path has a parent"))?;
        std::fs::write(path, body)?;
    }
    Ok(())
}


/// The worked example's printed tables (4-decimal cells) and sums.
pub mod printed {
    pub struct Table {
        /// Ability the table is evaluated at, as printed.
        pub theta: f64,
        pub p: [f64; 20],
        pub q: [f64; 20],
        pub numerator_sum: f64,
        pub denominator_sum: f64,
    }

    pub const THETA_1: f64 = 1.4829370716345234;
    pub const THETA_FINAL: f64 = 1.48820;

    pub const ITERATION_1: Table = Table {
        theta: 1.0,
        p: [
            0.7109, 0.6900, 0.6682, 0.6456, 0.6224, 0.5987, 0.5744, 0.5498, 0.5250, 0.5000, 0.4750, 0.4502, 0.4256,
            0.4013, 0.3776, 0.3544, 0.3318, 0.3100, 0.2891, 0.2690,
        ],
        q: [
            0.2891, 0.3100, 0.3318, 0.3544, 0.3776, 0.4013, 0.4256, 0.4502, 0.4750, 0.5000, 0.5250, 0.5498, 0.5744,
            0.5987, 0.6224, 0.6456, 0.6682, 0.6900, 0.7109, 0.7310,
        ],
        numerator_sum: 2.23104,
        denominator_sum: 4.61973,
    };

    pub const ITERATION_2: Table = Table {
        theta: 1.4829,
        p: [
            0.7994, 0.7829, 0.7655, 0.7470, 0.7277, 0.7074, 0.6863, 0.6644, 0.6417, 0.6184, 0.5946, 0.5703, 0.5456,
            0.5207, 0.4957, 0.4708, 0.4460, 0.4214, 0.3972, 0.3736,
        ],
        q: [
            0.2006, 0.2171, 0.2345, 0.2530, 0.2723, 0.2926, 0.3137, 0.3356, 0.3583, 0.3816, 0.4054, 0.4297, 0.4544,
            0.4793, 0.5043, 0.5292, 0.5540, 0.5786, 0.6028, 0.6264,
        ],
        numerator_sum: 0.0243,
        denominator_sum: 4.5452,
    };

    /// Final table; its printed numerator sum (-1.1102) disagrees with its own column.
    pub const FINAL: Table = Table {
        theta: super::printed::THETA_FINAL,
        p: [
            0.8003, 0.7838, 0.7664, 0.7480, 0.7287, 0.7085, 0.6874, 0.6656, 0.6429, 0.6197, 0.5958, 0.5715, 0.5469,
            0.5220, 0.4971, 0.4721, 0.4473, 0.4227, 0.3985, 0.3748,
        ],
        q: [
            0.1997, 0.2162, 0.2336, 0.2520, 0.2713, 0.2915, 0.3126, 0.3344, 0.3571, 0.3803, 0.4042, 0.4285, 0.4531,
            0.4780, 0.5029, 0.5279, 0.5527, 0.5773, 0.6015, 0.6252,
        ],
        numerator_sum: -1.1102,
        denominator_sum: 4.4512,
    };

    /// Standard error implied by the final table's information sum, `1 / sqrt(4.4512)`.
    pub const STANDARD_ERROR: f64 = 0.4740;
}
