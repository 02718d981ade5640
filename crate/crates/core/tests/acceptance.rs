//! Acceptance suite: one test per shipping criterion, each printing a
//! single pass/fail line. Run with `cargo test --test acceptance`.

use std::collections::HashSet;
use std::panic::AssertUnwindSafe;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tircal::analysis::{
    compute_conciseness, compute_effi, compute_reasoning_length_metric,
    compute_successful_execution, detect_aborted_executions, judge_redundancy, JudgeCache,
    ScoredTrajectory,
};
use tircal::flywheel::{
    is_correct, quality_filter, run_flywheel, FlywheelConfig, PoolEntry, Provenance, RolloutPool,
};
use tircal::pareto::{
    crowding_distance, dominates, fast_nondominated_sort, pareto_select, population_std,
    GroupStats,
};
use tircal::pipeline::config::PipelineConfig;
use tircal::pipeline::cmd_train;
use tircal::policy::{
    clipped_surrogate_objective, curriculum_train, group_advantages, objective_gradient,
    ActionToken, CurriculumSchedule, ToyPolicy, NUM_ACTIONS, THETA_LEN,
};
use tircal::reward::{aggregate_reward, length_behavior_score, tool_behavior_score, RewardConfig};
use tircal::sim::{scripted_generator, SimWorld};
use tircal::trajectory::{
    parse_trajectory, parse_trajectory_with, ParseError, ParseMode, Segment, TaskKind, TaskRecord,
    ToolKind, Trajectory,
};

/// Runs a criterion body and prints exactly one pass/fail line for it.
fn criterion(number: usize, name: &str, body: impl FnOnce()) {
    let outcome = std::panic::catch_unwind(AssertUnwindSafe(body));
    match &outcome {
        Ok(()) => println!("criterion {number:2} {name}: pass"),
        Err(_) => println!("criterion {number:2} {name}: FAIL"),
    }
    if let Err(payload) = outcome {
        std::panic::resume_unwind(payload);
    }
}

fn stats(id: String, s_corr: f64, s_tool: f64) -> GroupStats {
    GroupStats {
        question_id: id,
        s_corr,
        s_tool,
        k: 16,
    }
}

/// Independent brute-force oracle: repeatedly peel off the non-dominated set.
fn peel_frontiers(stats: &[GroupStats]) -> Vec<Vec<String>> {
    let mut remaining: Vec<&GroupStats> = stats.iter().collect();
    let mut frontiers = Vec::new();
    while !remaining.is_empty() {
        let front: Vec<&GroupStats> = remaining
            .iter()
            .filter(|p| !remaining.iter().any(|q| dominates(q, p)))
            .copied()
            .collect();
        let ids: HashSet<&str> = front.iter().map(|p| p.question_id.as_str()).collect();
        remaining.retain(|p| !ids.contains(p.question_id.as_str()));
        frontiers.push(front.iter().map(|p| p.question_id.clone()).collect());
    }
    frontiers
}

#[test]
fn criterion_01_pareto_oracle_equivalence() {
    criterion(1, "pareto oracle equivalence", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..1000 {
            let n = rng.gen_range(1..=200);
            let quantized = case % 2 == 0;
            let input: Vec<GroupStats> = (0..n)
                .map(|i| {
                    let (c, t) = if quantized {
                        // coarse grid to provoke ties and incomparable pairs
                        (
                            rng.gen_range(0..6) as f64 * 0.1,
                            rng.gen_range(0..6) as f64 * 0.5,
                        )
                    } else {
                        (rng.gen::<f64>(), rng.gen::<f64>() * 3.0)
                    };
                    stats(format!("q{i}"), c, t)
                })
                .collect();
            let fast = fast_nondominated_sort(&input);
            assert_eq!(fast.frontiers, peel_frontiers(&input), "instance {case}");
        }
        assert!(
            start.elapsed() < Duration::from_secs(30),
            "took {:?}",
            start.elapsed()
        );
    });
}

#[test]
fn criterion_02_crowding_and_selection() {
    criterion(2, "crowding distance and truncation selection", || {
        // four-point fixture: one dominant point, a two-point middle
        // frontier, one dominated point
        let input = vec![
            stats("a".into(), 2.0, 2.0),
            stats("b".into(), 1.0, 1.0),
            stats("c".into(), 2.0, 1.0),
            stats("d".into(), 1.0, 2.0),
        ];
        let partition = fast_nondominated_sort(&input);
        assert_eq!(partition.frontiers[0], vec!["a".to_string()]);
        assert_eq!(partition.frontiers[1], vec!["c".to_string(), "d".to_string()]);
        // selecting three keeps the top frontier plus both boundary members
        // of the second
        assert_eq!(
            pareto_select(&input, 3).unwrap(),
            vec!["a".to_string(), "c".to_string(), "d".to_string()]
        );

        // boundary members of a frontier always carry infinite distance and
        // survive any truncation
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..50 {
            let n = rng.gen_range(4..=40);
            // a strictly decreasing staircase is a single frontier
            let mut xs: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let front: Vec<GroupStats> = xs
                .iter()
                .enumerate()
                .map(|(i, &x)| stats(format!("q{i}"), x, 1.0 - x))
                .collect();
            assert_eq!(fast_nondominated_sort(&front).frontiers.len(), 1);
            let d = crowding_distance(&front);
            assert_eq!(d["q0"], f64::INFINITY);
            assert_eq!(d[&format!("q{}", n - 1)], f64::INFINITY);
            let target = rng.gen_range(2..n);
            let picked = pareto_select(&front, target).unwrap();
            assert!(picked.contains(&"q0".to_string()));
            assert!(picked.contains(&format!("q{}", n - 1)));
        }
    });
}

#[test]
fn criterion_03_reward_scalar_oracles() {
    criterion(3, "behavior-score scalar oracles", || {
        // straight-line evaluations, written out independently of the library
        let counts = [2.0, 4.0, 6.0];
        let mean: f64 = (2.0 + 4.0 + 6.0) / 3.0;
        let f_tool_oracle = 1.0 / (1.0 + (0.1 * (6.0 - mean)).exp());
        let f_tool = tool_behavior_score(6.0, &counts, 0.1);
        assert!((f_tool - f_tool_oracle).abs() < 1e-6);
        assert!((f_tool - 0.450166).abs() < 1e-6);

        let lengths = [100.0, 200.0, 300.0];
        let std = ((10000.0 + 0.0 + 10000.0) / 3.0f64).sqrt();
        let z = (300.0 - 200.0) / std;
        assert!((z - 1.224745).abs() < 1e-6);
        let f_len_oracle = 1.0 / (1.0 + (0.1 * z).exp());
        let f_len = length_behavior_score(&lengths, 2, 0.1);
        assert!((f_len - f_len_oracle).abs() < 1e-6);

        let aggregate = aggregate_reward(1.0, 0.0, f_tool, f_len).r_total;
        assert!((aggregate - f_tool_oracle * f_len_oracle).abs() < 1e-6);

        // exactly 0.5 at the group mean
        assert_eq!(tool_behavior_score(4.0, &counts, 0.1), 0.5);
        assert_eq!(length_behavior_score(&[7.0, 7.0, 7.0], 1, 0.1), 0.5);
    });
}

#[test]
fn criterion_04_advantage_normalization() {
    criterion(4, "advantage normalization", || {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..1000 {
            let n = rng.gen_range(2..=32);
            let rewards: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            let adv = group_advantages(&rewards).values;
            let mean = adv.iter().sum::<f64>() / adv.len() as f64;
            assert!(mean.abs() < 1e-9);
            assert!((population_std(&adv) - 1.0).abs() < 1e-9);
        }
        let flat = group_advantages(&[0.25; 7]).values;
        assert!(flat.iter().all(|&a| a == 0.0));
    });
}

fn random_token(rng: &mut ChaCha8Rng) -> ActionToken {
    let state = rng.gen_range(0..2);
    let mut mask = [false; NUM_ACTIONS];
    while mask.iter().filter(|&&m| m).count() < 2 {
        mask = [(); NUM_ACTIONS].map(|_| rng.gen_bool(0.8));
    }
    let unmasked: Vec<usize> = (0..NUM_ACTIONS).filter(|&a| mask[a]).collect();
    let action = unmasked[rng.gen_range(0..unmasked.len())];
    ActionToken { state, mask, action }
}

#[test]
fn criterion_05_gradient_fidelity() {
    criterion(5, "surrogate gradient vs finite differences", || {
        let epsilon = 0.2;
        let h = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let mut checked = 0usize;
        let mut clip_active = 0usize;
        while checked < 120 {
            let theta: [f64; THETA_LEN] = [(); THETA_LEN].map(|_| rng.gen::<f64>() * 2.0 - 1.0);
            let theta_old: [f64; THETA_LEN] =
                theta.map(|v| v + rng.gen::<f64>() * 1.6 - 0.8);
            let policy = ToyPolicy { theta, theta_old };

            let groups: Vec<Vec<Vec<ActionToken>>> = (0..2)
                .map(|_| {
                    (0..3)
                        .map(|_| (0..rng.gen_range(1..=4)).map(|_| random_token(&mut rng)).collect())
                        .collect()
                })
                .collect();
            let advantages: Vec<_> = groups
                .iter()
                .map(|g| {
                    let rewards: Vec<f64> = g.iter().map(|_| rng.gen::<f64>()).collect();
                    group_advantages(&rewards)
                })
                .collect();

            // skip fixtures with a ratio near a clip kink, where finite
            // differences are invalid; count the genuinely clipped ones
            let mut near_kink = false;
            let mut fixture_clips = false;
            for (group, adv) in groups.iter().zip(&advantages) {
                for (tokens, &a) in group.iter().zip(&adv.values) {
                    for token in tokens {
                        let r = (policy.log_prob(token) - policy.log_prob_old(token)).exp();
                        if (r - (1.0 - epsilon)).abs() < 1e-3 || (r - (1.0 + epsilon)).abs() < 1e-3
                        {
                            near_kink = true;
                        }
                        if (a > 0.0 && r > 1.0 + epsilon + 1e-3)
                            || (a < 0.0 && r < 1.0 - epsilon - 1e-3)
                        {
                            fixture_clips = true;
                        }
                    }
                }
            }
            if near_kink {
                continue;
            }
            if fixture_clips {
                clip_active += 1;
            }

            let analytic = objective_gradient(&policy, &groups, &advantages, epsilon).unwrap();
            let mut fd = [0.0; THETA_LEN];
            for (i, slot) in fd.iter_mut().enumerate() {
                let mut plus = theta;
                plus[i] += h;
                let mut minus = theta;
                minus[i] -= h;
                let jp = clipped_surrogate_objective(
                    &ToyPolicy { theta: plus, theta_old },
                    &groups,
                    &advantages,
                    epsilon,
                )
                .unwrap();
                let jm = clipped_surrogate_objective(
                    &ToyPolicy { theta: minus, theta_old },
                    &groups,
                    &advantages,
                    epsilon,
                )
                .unwrap();
                *slot = (jp - jm) / (2.0 * h);
            }
            let diff: f64 = analytic
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(diff / scale.max(1e-8) < 1e-4, "fixture {checked}: {diff} vs {scale}");
            checked += 1;
        }
        assert!(clip_active >= 10, "only {clip_active} clip-active fixtures");

        // at theta = theta_old the objective is exactly the mean advantage,
        // which group normalization makes zero
        let mut rng = ChaCha8Rng::seed_from_u64(56);
        for _ in 0..20 {
            let theta: [f64; THETA_LEN] = [(); THETA_LEN].map(|_| rng.gen::<f64>() * 2.0 - 1.0);
            let policy = ToyPolicy::new(theta);
            let groups: Vec<Vec<Vec<ActionToken>>> = vec![(0..4)
                .map(|_| (1..=3).map(|_| random_token(&mut rng)).collect())
                .collect()];
            let rewards: Vec<f64> = (0..4).map(|_| rng.gen::<f64>()).collect();
            let advantages = vec![group_advantages(&rewards)];
            let j = clipped_surrogate_objective(&policy, &groups, &advantages, epsilon).unwrap();
            assert!(j.abs() < 1e-9);
        }
    });
}

#[test]
fn criterion_06_end_to_end_calibration() {
    criterion(6, "end-to-end over-caller calibration", || {
        let start = Instant::now();
        let world = SimWorld::generate_mixed(100, 100, 0);
        let mut policy = ToyPolicy::over_caller(0.6, 0.2);
        let schedule = CurriculumSchedule::default();
        let report =
            curriculum_train(&mut policy, &world, &schedule, &RewardConfig::default(), 42)
                .unwrap();
        assert_eq!(report.rounds.len(), schedule.rounds + 1);

        let first = &report.rounds[0];
        let last = report.rounds.last().unwrap();
        let drop = 1.0 - last.mean_tool_calls_correct / first.mean_tool_calls_correct;
        assert!(
            drop >= 0.25,
            "tool calls among correct dropped only {:.1}%",
            drop * 100.0
        );
        assert!(
            last.accuracy >= first.accuracy - 0.02,
            "accuracy fell from {} to {}",
            first.accuracy,
            last.accuracy
        );
        for pair in report.rounds.windows(2) {
            assert!(
                pair[1].effi > pair[0].effi,
                "efficiency not strictly increasing: {} -> {}",
                pair[0].effi,
                pair[1].effi
            );
        }
        assert!(start.elapsed() < Duration::from_secs(600));
    });
}

mod fixtures {
    /// A correct knowledge trajectory whose final python call merely
    /// re-prints an answer the searches already established.
    pub const REDUNDANT_VERIFICATION: &str = "<think>To find out which river system the Umchabezi River serves as the mouth of, I'll need to search for information on this river.</think> <search>Umchabezi River mouth</search> <result>The Umchabezi River is a tributary of the Mzingwane River in Beitbridge District and Gwanda District, Zimbabwe. The main dam on the river is Makado Dam, which supplies water for commercial irrigation.</result>\n<search>Mzingwane River mouth</search> <result>The Mzingwane River, formerly known as Umzingwane River or Umzingwani River, is a major left-bank tributary of the Limpopo River in Zimbabwe. It rises near Fort Usher, Matobo District, south of Bulawayo and flows into the Limpopo River near Beitbridge.</result>\n<think>According to the search results, the river system that the Umchabezi River serves as a tributary of is the Limpopo River. Let's verify this with Python code.</think> <python>print('Limpopo River')</python> <result>Limpopo River</result>\n<answer>Therefore, the final answer is \\boxed{\\text{Limpopo River}}.</answer>";

    /// A correct math trajectory whose first code attempt dies with a
    /// NameError before a fixed rerun succeeds.
    pub const ABORTED_EXECUTION: &str = "<think>Substituting m = 7 and n = 8 gives the equation x^2 + 15x + 56 = 0 with discriminant 225 - 224 = 1, so the roots are (-15 + 1)/2 = -7 and (-15 - 1)/2 = -8, and the lesser is -8. Let's use Python to check this answer.</think> <python>from sympy import symbols, Eq, solve\n\nm, n = 7, 8\nexpr = symbols('x')\nequation = Eq(x**2 + (m+n)*x + m*n, 0)\nroots = solve(equation, x)\nmin_root = min(roots)\nmin_root.evalf()</python> <result>Traceback (most recent call last): File \"<string>\", line 4, in <module>\nNameError: name 'x' is not defined</result>\n<think>Oops, I forgot to define x. Let me fix.</think> <python>from sympy import symbols, Eq, solve\nx = symbols('x')\nequation = Eq(x**2 + (7+8)*x + 7*8, 0)\nroots = solve(equation, x)\nmin_root = min(roots)\nprint(f\"{min_root.evalf()=}\")</python> <result>min_root.evalf()=-8.00000000000000</result>\n<think>Hence, the lesser solution is:</think> <answer>\\boxed{-8}.</answer>";

    /// A knowledge trajectory that gives up after a single unhelpful search
    /// instead of issuing a follow-up query.
    pub const INSUFFICIENT_CALLS: &str = "<think>To determine who Sancho Ramirez's maternal grandfather was, we need biographical details focusing on his mother's side of the family. I will proceed by searching for general information on famous figures with this name.</think> <search>Sancho Ramirez biography</search> <result>Sancho Ramirez was an illegitimate son of King Ramiro I of Aragon and Amua, the firstborn and brother of his namesake who would inherit the throne and reign as Sancho Ramirez. Even though he could not inherit the throne because his father had legitimate issue, he was named count at an early age and was a prominent member of the curia regis.</result>\n<think>The provided summary doesn't contain explicit information about Sancho Ramirez's maternal grandfather. Further targeted searches may be required to find this particular detail. Based on the available data, there isn't enough evidence to identify Sancho Ramirez's maternal grandfather clearly.</think> <answer>\\boxed{\\text{Insufficient information}}.</answer>";

    /// A math trajectory that reaches the right answer through a spurious
    /// divisibility argument and an off-topic search.
    pub const ERRONEOUS_REASONING: &str = "<think>The sum of three consecutive integers n-1, n, and n+1 equals 3n, so we are looking for the smallest positive perfect cube expressible as 3n. A perfect cube is of the form k^3, and we need k^3 = 3n, implying k^3 must be divisible by 3. Let's check the smallest values for k such that k^3 is a multiple of 3.</think> <search>smallest perfect cubes that are multiples of 3</search> <result>Perfect magic cube. In mathematics, a perfect magic cube is a magic cube in which not only the columns, rows, pillars, and main space diagonals, but also the cross section diagonals sum up to the cube's magic constant.</result>\n<think>It seems that the smallest value of k cannot be found through searching. Let's try using Python.</think> <python>for k in range(1, 10):\n    if (k**3) % 3 == 0:\n        smallest_cube_multiple_of_3 = k**3\n        break\n\nsmallest_cube_multiple_of_3</python> <result>27</result>\n<think>From our calculations and understanding, the smallest positive perfect cube that can be written as the sum of three consecutive integers is 27. Since 27 = 3^3 and it fits the requirement as 3 x 9, it is indeed the correct answer.</think> <answer>The smallest positive perfect cube that can be written as the sum of three consecutive integers is \\boxed{27}.</answer>";
}

fn entry(raw: &str) -> PoolEntry {
    PoolEntry {
        raw: raw.to_string(),
        trajectory: parse_trajectory(raw).ok(),
        provenance: Provenance::Initial,
        round: 0,
    }
}

#[test]
fn criterion_07_flywheel_contract() {
    criterion(7, "flywheel pool and filter contract", || {
        // pool monotonicity under scripted enhancers: every extra round can
        // only add entries, and the originals survive
        let math = TaskRecord {
            id: "m1".into(),
            question: "What is 2+3?".into(),
            gold_answer: "5".into(),
            kind: TaskKind::Math,
            trajectories: vec![],
        };
        let rollout = "<think>compute</think> <python>2+3</python> <result>5</result>\n<think>done</think> <answer>The final answer is \\[ \\boxed{5} \\]</answer>";
        let growing = scripted_generator(
            vec![
                (
                    "redundancy".into(),
                    "Step: 1\nAnalysis: shorter\nCorrected Step: <think>go</think> <python>2+3</python> <result>5</result>".into(),
                ),
                ("refine ONLY".into(), rollout.into()),
            ],
            "<think>done</think> <answer>The final answer is \\[ \\boxed{5} \\]</answer>",
        );
        let mut sizes = Vec::new();
        for rounds in 0..=2 {
            let cfg = FlywheelConfig {
                rounds,
                initial_rollouts_per_question: 3,
                ..Default::default()
            };
            let pools = run_flywheel(std::slice::from_ref(&math), &growing, &cfg).unwrap();
            let initial = pools[0]
                .entries
                .iter()
                .filter(|e| e.provenance == Provenance::Initial)
                .count();
            assert_eq!(initial, 3, "initial rollouts must survive enhancement");
            sizes.push(pools[0].entries.len());
        }
        assert!(sizes.windows(2).all(|w| w[1] >= w[0]), "pool shrank: {sizes:?}");
        assert!(sizes[2] > sizes[0], "enhancement rounds added nothing");

        // the quality filter output is clean under re-detection
        let verify_task = TaskRecord {
            id: "k1".into(),
            question: "What river does the system containing Umchabezi River serve as the mouth of?"
                .into(),
            gold_answer: "Limpopo River".into(),
            kind: TaskKind::Knowledge,
            trajectories: vec![],
        };
        let pool = RolloutPool {
            question_id: "k1".into(),
            entries: vec![
                entry(fixtures::REDUNDANT_VERIFICATION),
                entry("<think>guess</think> <answer>\\boxed{\\text{Zambezi River}}</answer>"),
                entry("<think>never closed"),
            ],
            failures: vec![],
        };
        let kept = quality_filter(&pool, &verify_task.gold_answer, verify_task.kind);
        assert_eq!(kept.len(), 1);
        for e in &kept {
            let t = e.trajectory.as_ref().expect("filtered entries parsed");
            assert!(detect_aborted_executions(t).is_empty());
            assert!(is_correct(t, &verify_task.gold_answer, verify_task.kind));
        }

        // the aborted-execution trajectory is rejected despite its correct
        // final answer
        let aborted_pool = RolloutPool {
            question_id: "m2".into(),
            entries: vec![entry(fixtures::ABORTED_EXECUTION)],
            failures: vec![],
        };
        let t = aborted_pool.entries[0].trajectory.as_ref().unwrap();
        assert!(is_correct(t, "-8", TaskKind::Math));
        assert!(quality_filter(&aborted_pool, "-8", TaskKind::Math).is_empty());

        // the verification trajectory passes the filter but a semantic stub
        // judge still flags its superfluous python call
        let survivor = kept[0].trajectory.as_ref().unwrap();
        let stub = |prompt: &str| -> Result<String, tircal::analysis::JudgeError> {
            Ok(if prompt.contains("print('Limpopo River')") {
                "<answer>yes</answer>".to_string()
            } else {
                "<answer>no</answer>".to_string()
            })
        };
        let cache = JudgeCache::new();
        assert!(judge_redundancy(survivor, &verify_task, &stub, &cache).unwrap());
    });
}

const WORDS: [&str; 12] = [
    "alpha", "beta", "gamma", "delta", "sum", "query", "result", "value", "step", "check",
    "final", "count",
];

fn random_words(rng: &mut ChaCha8Rng, max: usize) -> String {
    let n = rng.gen_range(1..=max);
    (0..n)
        .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

fn random_trajectory(rng: &mut ChaCha8Rng) -> Trajectory {
    let mut segments = Vec::new();
    for _ in 0..rng.gen_range(0..4) {
        for _ in 0..rng.gen_range(0..3) {
            segments.push(Segment::Think(random_words(rng, 6)));
        }
        let kind = if rng.gen_bool(0.5) { ToolKind::Search } else { ToolKind::Python };
        segments.push(Segment::ToolCall { kind, text: random_words(rng, 4) });
        segments.push(Segment::ToolResult { kind, text: random_words(rng, 8) });
    }
    if rng.gen_bool(0.7) || segments.is_empty() {
        if rng.gen_bool(0.5) {
            segments.push(Segment::Think(random_words(rng, 6)));
        }
        let boxed = format!(
            "The final answer is \\[ \\boxed{{{}}} \\]",
            rng.gen_range(-50..50)
        );
        segments.push(Segment::Answer(boxed));
    }
    Trajectory::from_segments(segments).expect("generated segments are valid")
}

#[test]
fn criterion_08_parser_round_trip_and_errors() {
    criterion(8, "parser round trip and error classes", || {
        let mut rng = ChaCha8Rng::seed_from_u64(88);
        for _ in 0..10_000 {
            let t = random_trajectory(&mut rng);
            let text = t.serialize();
            let parsed = parse_trajectory(&text).expect("canonical text parses");
            assert_eq!(parsed, t);
            assert_eq!(parsed.serialize(), text);
        }

        for text in [
            fixtures::REDUNDANT_VERIFICATION,
            fixtures::ABORTED_EXECUTION,
            fixtures::INSUFFICIENT_CALLS,
            fixtures::ERRONEOUS_REASONING,
        ] {
            let t = parse_trajectory(text).expect("fixture parses");
            assert_eq!(t.serialize(), text, "fixture is in canonical form");
            assert_eq!(parse_trajectory(&t.serialize()).unwrap(), t);
            assert!(t.final_answer().is_some());
        }

        // each malformed-input class maps to its designated error
        assert_eq!(parse_trajectory("   \n"), Err(ParseError::EmptyInput));
        assert_eq!(
            parse_trajectory("<think>never closed"),
            Err(ParseError::UnbalancedTag("think".into()))
        );
        assert_eq!(
            parse_trajectory("</result> trailing"),
            Err(ParseError::UnbalancedTag("result".into()))
        );
        assert_eq!(
            parse_trajectory("<search>q</search> <answer>\\boxed{1}</answer>"),
            Err(ParseError::OrphanCall(0))
        );
        assert_eq!(
            parse_trajectory("<result>r</result>"),
            Err(ParseError::OrphanResult)
        );
        assert_eq!(
            parse_trajectory("<answer>\\boxed{1}</answer> <answer>\\boxed{2}</answer>"),
            Err(ParseError::ContentAfterAnswer)
        );
        assert_eq!(
            parse_trajectory("<answer>\\boxed{1}</answer> <think>late</think>"),
            Err(ParseError::ContentAfterAnswer)
        );
        assert_eq!(
            parse_trajectory("<search> </search><result>r</result>"),
            Err(ParseError::EmptySegment("tool call"))
        );
        assert_eq!(
            parse_trajectory_with("stray <answer>\\boxed{1}</answer>", ParseMode::Strict),
            Err(ParseError::StrayText)
        );
        // tolerant mode promotes the same input instead
        let (t, report) =
            parse_trajectory_with("stray <answer>\\boxed{1}</answer>", ParseMode::Tolerant)
                .unwrap();
        assert!(matches!(&t.segments()[0], Segment::Think(s) if s == "stray"));
        assert!(!report.is_clean());
    });
}

fn scored(correctness: f64, tool_calls: usize, wrong: usize, tokens: usize, redundant: bool) -> ScoredTrajectory {
    let trajectory =
        parse_trajectory("<think>x</think> <answer>\\boxed{1}</answer>").unwrap();
    ScoredTrajectory {
        trajectory,
        correctness,
        tool_calls,
        wrong_executions: wrong,
        reasoning_tokens: tokens,
        redundant,
    }
}

#[test]
fn criterion_09_metric_oracles_and_permutation() {
    criterion(9, "metric hand oracles and permutation invariance", || {
        let set = vec![
            scored(1.0, 2, 0, 100, false),
            scored(0.5, 0, 2, 50, true),
            scored(0.0, 5, 1, 10, false),
        ];
        assert_eq!(compute_effi(&set).unwrap(), (0.5 + 0.5 + 0.0) / 3.0);
        assert_eq!(compute_conciseness(&set).unwrap(), 2.0 / 3.0);
        assert_eq!(
            compute_successful_execution(&set).unwrap(),
            (1.0 + 0.25 + 0.0) / 3.0
        );
        assert_eq!(
            compute_reasoning_length_metric(&set).unwrap(),
            (0.01 + 0.01 + 0.0) / 3.0
        );

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let base: Vec<ScoredTrajectory> = (0..10)
            .map(|_| {
                scored(
                    rng.gen::<f64>(),
                    rng.gen_range(0..6),
                    rng.gen_range(0..3),
                    rng.gen_range(1..400),
                    rng.gen_bool(0.3),
                )
            })
            .collect();
        let metrics = |s: &[ScoredTrajectory]| {
            [
                compute_effi(s).unwrap(),
                compute_conciseness(s).unwrap(),
                compute_successful_execution(s).unwrap(),
                compute_reasoning_length_metric(s).unwrap(),
            ]
        };
        let reference = metrics(&base);
        for _ in 0..20 {
            let mut shuffled = base.clone();
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.gen_range(0..=i));
            }
            for (a, b) in metrics(&shuffled).iter().zip(&reference) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    });
}

#[test]
fn criterion_10_training_reproducibility() {
    criterion(10, "training run reproducibility", || {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig::default();
        let run_a = dir.path().join("a");
        let run_b = dir.path().join("b");
        cmd_train(&cfg, &run_a, 7).unwrap();
        cmd_train(&cfg, &run_b, 7).unwrap();
        for artifact in ["report.csv", "theta.ckpt", "summary.json"] {
            let a = std::fs::read(run_a.join(artifact)).unwrap();
            let b = std::fs::read(run_b.join(artifact)).unwrap();
            assert_eq!(a, b, "{artifact} differs between identical runs");
        }
    });
}
