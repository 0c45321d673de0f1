use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::context::StageContext;
use crate::domain::{EvidenceLog, MultimodalClaim, QAPair, Question};
use crate::error::{PipelineError, Result};
use crate::provider::{bindings, envelope, ids};
use crate::retrieval::ImageCaption;
use crate::trace::{stage, TraceEvent};

use super::{
    answer_question, followup_check, format_qa_pairs, image_context_or_none, is_repeat, make_question, note_warning,
    record_pair, record_qa, retry_note, ReasonerConfig,
};

/// One answered branch of a tree step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchCandidate {
    pub pair: QAPair,
    pub branch_index: usize,
}

/// Runs `f` over `items` on scoped threads, one forked tracer each. Results and
/// trace events come back in item order whatever order the threads finish in.
pub(crate) fn fan_out<T, R, F>(ctx: &StageContext<'_>, items: Vec<T>, f: F) -> Vec<Result<R>>
where
    T: Send,
    R: Send,
    F: Fn(&StageContext<'_>, usize, T) -> Result<R> + Sync,
{
    let forks: Vec<_> = items.iter().map(|_| ctx.tracer.fork()).collect();
    let results: Vec<Result<R>> = std::thread::scope(|s| {
        let handles: Vec<_> = items
            .into_iter()
            .zip(&forks)
            .enumerate()
            .map(|(i, (item, tracer))| {
                let f = &f;
                let child = ctx.with_tracer(tracer);
                s.spawn(move || f(&child, i, item))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("branch worker panicked"))
            .collect()
    });
    for t in forks {
        ctx.tracer.absorb(t);
    }
    results
}

/// Exactly `k` questions for the next tree step, routed and indexed `0..k`.
///
/// The first step conditions on the claim alone, later steps on the surviving
/// pairs. A short or repetitive reply is re-prompted once; a second short
/// reply is an error. Extra questions are dropped.
pub fn generate_branch_questions(
    ctx: &StageContext<'_>,
    mm: &MultimodalClaim,
    captions: &[ImageCaption],
    log: Option<&EvidenceLog>,
    k: usize,
) -> Result<Vec<Question>> {
    let step = log.map_or(0, EvidenceLog::len);
    let prior: Vec<&str> = log
        .map(|l| l.pairs.iter().map(|p| p.question.text.as_str()).collect())
        .unwrap_or_default();
    let count = k.to_string();
    let qa = log.map(|l| format_qa_pairs(&l.pairs));
    let mut note = String::new();
    let mut texts = Vec::new();
    for attempt in 0..2 {
        let mut b = bindings([
            ("claim", mm.claim.as_str()),
            ("image_context", image_context_or_none(mm)),
            ("count", count.as_str()),
            ("retry_note", note.as_str()),
        ]);
        let template = match &qa {
            Some(qa) => {
                b.insert("qa_pairs".into(), qa.clone());
                ids::TORAG_FOLLOWUP_QUESTIONS
            }
            None => ids::TORAG_FIRST_QUESTIONS,
        };
        let reply = ctx.ask("branch_questions", template, b, None)?;
        texts = envelope::list_items(&reply, "QUESTION");
        let repeats = texts.iter().take(k).enumerate().any(|(i, q)| {
            let earlier: Vec<&str> = prior
                .iter()
                .copied()
                .chain(texts[..i].iter().map(String::as_str))
                .collect();
            is_repeat(q, &earlier)
        });
        if texts.len() >= k && (!repeats || attempt == 1) {
            break;
        }
        if attempt == 1 {
            return Err(PipelineError::BranchCountMismatch {
                expected: k,
                got: texts.len(),
            });
        }
        note = retry_note(&format!(
            "the previous reply did not contain {k} distinct new questions; write exactly {k} questions that differ from each other and from those already asked."
        ));
    }
    texts.truncate(k);
    let routed = fan_out(ctx, texts, |child, b, text| {
        Ok(make_question(child, mm, captions, text, step)?.with_branch(b))
    });
    routed.into_iter().collect()
}

/// Picks the single best candidate by index. Single candidates pass through
/// without a model call; invalid choices fall back to branch 0.
pub fn qa_elimination(ctx: &StageContext<'_>, mm: &MultimodalClaim, candidates: &[BranchCandidate]) -> Result<QAPair> {
    let mut sorted: Vec<&BranchCandidate> = candidates.iter().collect();
    sorted.sort_by_key(|c| c.branch_index);
    let Some(first) = sorted.first() else {
        return Err(PipelineError::Precondition(
            "elimination needs at least one candidate".into(),
        ));
    };
    if sorted.len() == 1 {
        return Ok(first.pair.clone());
    }
    let listing = sorted
        .iter()
        .map(|c| {
            format!(
                "Candidate {}:\nQ: {}\nA: {}",
                c.branch_index, c.pair.question.text, c.pair.answer
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n");
    let max_index = sorted.iter().map(|c| c.branch_index).max().unwrap_or(0).to_string();
    let reply = ctx.ask(
        "qa_elimination",
        ids::QA_ELIMINATION,
        bindings([
            ("claim", mm.claim.as_str()),
            ("image_context", image_context_or_none(mm)),
            ("candidates", listing.as_str()),
            ("max_index", max_index.as_str()),
        ]),
        None,
    )?;
    let choice = parse_choice(&reply);
    let chosen = choice.and_then(|n| sorted.iter().find(|c| c.branch_index == n));
    let chosen = match chosen {
        Some(c) => c,
        None => {
            note_warning(
                ctx,
                format!(
                    "elimination reply {:?} is not a valid candidate; keeping branch 0",
                    reply.trim()
                ),
                json!({ "choice": choice }),
            );
            first
        }
    };
    ctx.tracer
        .record(TraceEvent::new(stage::ELIMINATION).with_detail(json!({
            "step": chosen.pair.question.step_index,
            "chosen": chosen.branch_index,
            "candidates": sorted.len(),
        })));
    Ok(chosen.pair.clone())
}

fn parse_choice(reply: &str) -> Option<usize> {
    let value = envelope::lenient(reply, "CHOICE")?;
    let digits: String = value
        .chars()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(char::is_ascii_digit)
        .collect();
    digits.parse().ok()
}

/// Tree of RAG: each step branches into `branch_factor` questions, answers them
/// concurrently and keeps one survivor; the survivors form the evidence log.
pub fn run_torag(
    ctx: &StageContext<'_>,
    mm: &MultimodalClaim,
    captions: &[ImageCaption],
    cfg: &ReasonerConfig,
) -> Result<EvidenceLog> {
    let k = cfg.branch_factor;
    let mut best = EvidenceLog::new();
    let mut questions = generate_branch_questions(ctx, mm, captions, None, k)?;
    loop {
        let answered = fan_out(ctx, questions, |child, _, q| {
            let branch_index = q.branch_index.expect("branch questions carry an index");
            let pair = answer_question(child, q, mm, captions)?;
            record_qa(child, stage::BRANCH_QA, &pair);
            Ok(BranchCandidate { pair, branch_index })
        });
        let candidates = answered.into_iter().collect::<Result<Vec<_>>>()?;
        let survivor = qa_elimination(ctx, mm, &candidates)?;
        record_pair(ctx, &survivor);
        best.push(survivor);
        if !followup_check(ctx, mm, &best)? {
            best.terminated_early = true;
            break;
        }
        if best.len() >= cfg.max_steps {
            break;
        }
        questions = generate_branch_questions(ctx, mm, captions, Some(&best), k)?;
    }
    Ok(best)
}
