use crate::context::StageContext;
use crate::domain::{EvidenceLog, MultimodalClaim};
use crate::error::{PipelineError, Result};
use crate::provider::{bindings, envelope, ids};
use crate::retrieval::ImageCaption;

use super::{
    answer_question, followup_check, format_qa_pairs, image_context_or_none, is_repeat, make_question, record_pair,
    retry_note, ReasonerConfig,
};

fn first_question(ctx: &StageContext<'_>, mm: &MultimodalClaim) -> Result<String> {
    let reply = ctx.ask(
        "first_question",
        ids::FIRST_QUESTION,
        bindings([
            ("claim", mm.claim.as_str()),
            ("image_context", image_context_or_none(mm)),
        ]),
        None,
    )?;
    envelope::lenient(&reply, "QUESTION").ok_or(PipelineError::EmptyQuestionSet)
}

/// Follow-up conditioned on every pair so far. A verbatim repeat of an earlier
/// question is re-prompted once, then accepted.
fn followup_question(ctx: &StageContext<'_>, mm: &MultimodalClaim, log: &EvidenceLog) -> Result<String> {
    let prior: Vec<&str> = log.pairs.iter().map(|p| p.question.text.as_str()).collect();
    let qa = format_qa_pairs(&log.pairs);
    let mut note = String::new();
    for attempt in 0..2 {
        let reply = ctx.ask(
            "followup_question",
            ids::FOLLOWUP_QUESTION,
            bindings([
                ("claim", mm.claim.as_str()),
                ("image_context", image_context_or_none(mm)),
                ("qa_pairs", qa.as_str()),
                ("retry_note", note.as_str()),
            ]),
            None,
        )?;
        let q = envelope::lenient(&reply, "QUESTION").ok_or(PipelineError::EmptyQuestionSet)?;
        if attempt == 1 || !is_repeat(&q, &prior) {
            return Ok(q);
        }
        note = retry_note(&format!(
            "the question \"{q}\" was already asked; ask for different information."
        ));
    }
    unreachable!("second attempt always returns")
}

/// Chain of RAG: ask, answer, check, and ask a follow-up built on all prior pairs,
/// for at most `max_steps` questions.
pub fn run_corag(
    ctx: &StageContext<'_>,
    mm: &MultimodalClaim,
    captions: &[ImageCaption],
    cfg: &ReasonerConfig,
) -> Result<EvidenceLog> {
    let mut log = EvidenceLog::new();
    let mut text = first_question(ctx, mm)?;
    let mut step = 0;
    loop {
        let question = make_question(ctx, mm, captions, text, step)?;
        let pair = answer_question(ctx, question, mm, captions)?;
        record_pair(ctx, &pair);
        log.push(pair);
        if !followup_check(ctx, mm, &log)? {
            log.terminated_early = true;
            break;
        }
        step += 1;
        // the follow-up question for a step that will never run is not generated
        if step >= cfg.max_steps {
            break;
        }
        text = followup_question(ctx, mm, &log)?;
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::MockProvider;
    use crate::testkit::{snippet, Harness, MemoryBackend};
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn chain_mock(check: impl Fn(usize) -> bool + Send + Sync + 'static) -> MockProvider {
        let n = Arc::new(AtomicUsize::new(0));
        MockProvider::new()
            .reply(
                ids::FIRST_QUESTION,
                "QUESTION: What was the average grant per employee?",
            )
            .on(ids::FOLLOWUP_QUESTION, |p| {
                let count = p.binding("qa_pairs").unwrap().matches("\nA").count() + 1;
                format!("QUESTION: Follow-up number {count}?")
            })
            .on(ids::WEB_ANSWER, |p| {
                format!("ANSWER: answer to {}", p.binding("question").unwrap())
            })
            .on(ids::FOLLOWUP_CHECK, move |_| {
                let i = n.fetch_add(1, Ordering::SeqCst) + 1;
                format!("FOLLOWUP_NEEDED: {}", check(i))
            })
    }

    fn harness(mock: MockProvider) -> Harness {
        Harness::new(mock).with_backend(MemoryBackend::always(vec![snippet("https://a.org/x", "evidence text")]))
    }

    fn mm() -> MultimodalClaim {
        MultimodalClaim::text_only("PPP on average provided a grant of around $11,000 per employee").unwrap()
    }

    #[test]
    fn always_true_check_runs_max_steps() {
        let h = harness(chain_mock(|_| true));
        let log = run_corag(&h.ctx(), &mm(), &[], &ReasonerConfig::default()).unwrap();
        assert_eq!(log.len(), 6);
        assert_eq!(log.steps_used, 6);
        assert!(!log.terminated_early);
        assert_eq!(h.provider.calls(ids::FOLLOWUP_QUESTION), 5);
        assert!(log.is_ordered());
    }

    #[test]
    fn false_check_terminates_early() {
        let h = harness(chain_mock(|i| i < 2));
        let log = run_corag(&h.ctx(), &mm(), &[], &ReasonerConfig::default()).unwrap();
        assert_eq!(log.len(), 2);
        assert!(log.terminated_early);
    }

    #[test]
    fn followups_see_every_prior_answer() {
        let h = harness(chain_mock(|_| true));
        let log = run_corag(&h.ctx(), &mm(), &[], &ReasonerConfig::default()).unwrap();
        for (n, b) in h.provider.bindings_for(ids::FOLLOWUP_QUESTION).iter().enumerate() {
            let qa = &b["qa_pairs"];
            for prior in &log.pairs[..=n] {
                assert!(qa.contains(&prior.answer));
            }
        }
    }

    #[test]
    fn repeated_question_reprompted_once() {
        let mock = MockProvider::new()
            .reply(ids::FIRST_QUESTION, "QUESTION: Same?")
            .on(ids::FOLLOWUP_QUESTION, |p| {
                if p.binding("retry_note").unwrap().is_empty() {
                    "QUESTION: same?".into()
                } else {
                    "QUESTION: Different?".into()
                }
            })
            .reply(ids::WEB_ANSWER, "ANSWER: a")
            .sequence(ids::FOLLOWUP_CHECK, ["True", "False"]);
        let h = harness(mock);
        let log = run_corag(&h.ctx(), &mm(), &[], &ReasonerConfig::default()).unwrap();
        assert_eq!(log.pairs[1].question.text, "Different?");
        assert_eq!(h.provider.calls(ids::FOLLOWUP_QUESTION), 2);
    }

    #[test]
    fn provider_error_mid_loop_propagates() {
        let mock = chain_mock(|_| true).fail(
            ids::FOLLOWUP_QUESTION,
            crate::provider::ProviderError::Unavailable("down".into()),
        );
        let h = harness(mock);
        let err = run_corag(&h.ctx(), &mm(), &[], &ReasonerConfig::default()).unwrap_err();
        assert!(matches!(err, PipelineError::Provider(_)));
        // the pair gathered before the failure is in the trace
        assert_eq!(h.tracer.events().iter().filter(|e| e.stage == "qa").count(), 1);
    }

    #[test]
    fn single_step_budget() {
        let h = harness(chain_mock(|_| true));
        let cfg = ReasonerConfig {
            max_steps: 1,
            ..Default::default()
        };
        let log = run_corag(&h.ctx(), &mm(), &[], &cfg).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(h.provider.calls(ids::FOLLOWUP_QUESTION), 0);
    }
}
