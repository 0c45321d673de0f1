use crate::context::StageContext;
use crate::domain::{EvidenceLog, MultimodalClaim};
use crate::error::{PipelineError, Result};
use crate::provider::{bindings, envelope, ids};
use crate::retrieval::ImageCaption;

use super::{answer_question, image_context_or_none, make_question, record_pair, ReasonerConfig};

/// Sub-question baseline: one call proposes up to `max_subquestions` questions
/// from the claim alone; each is answered independently.
pub fn run_subq(
    ctx: &StageContext<'_>,
    mm: &MultimodalClaim,
    captions: &[ImageCaption],
    cfg: &ReasonerConfig,
) -> Result<EvidenceLog> {
    let max = cfg.max_subquestions.to_string();
    let reply = ctx.ask(
        "subq_questions",
        ids::SUBQ_QUESTIONS,
        bindings([
            ("claim", mm.claim.as_str()),
            ("image_context", image_context_or_none(mm)),
            ("max_questions", max.as_str()),
        ]),
        None,
    )?;
    let mut texts = envelope::list_items(&reply, "QUESTION");
    if texts.is_empty() {
        return Err(PipelineError::EmptyQuestionSet);
    }
    texts.truncate(cfg.max_subquestions);
    let mut log = EvidenceLog::new();
    for (i, text) in texts.into_iter().enumerate() {
        let question = make_question(ctx, mm, captions, text, i)?;
        let pair = answer_question(ctx, question, mm, captions)?;
        record_pair(ctx, &pair);
        log.push(pair);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::MockProvider;
    use crate::testkit::{snippet, Harness, MemoryBackend};

    fn harness(questions: &str) -> Harness {
        let mock = MockProvider::new()
            .reply(ids::SUBQ_QUESTIONS, questions)
            .on(ids::WEB_ANSWER, |p| {
                format!("ANSWER: about {}", p.binding("question").unwrap())
            });
        Harness::new(mock).with_backend(MemoryBackend::always(vec![snippet("https://a.org/1", "text")]))
    }

    fn mm() -> MultimodalClaim {
        MultimodalClaim::text_only("PPP on average provided a grant of around $11,000 per employee").unwrap()
    }

    #[test]
    fn four_questions_in_emission_order() {
        let h = harness(
            "QUESTION 1: What was the total amount of funds disbursed through the PPP in 2020?\n\
             QUESTION 2: What criteria determined the grant per employee?\n\
             QUESTION 3: Were there variations by industry?\n\
             QUESTION 4: How does the PPP define an employee?",
        );
        let log = run_subq(&h.ctx(), &mm(), &[], &ReasonerConfig::default()).unwrap();
        assert_eq!(log.len(), 4);
        assert!(log.pairs[0].question.text.starts_with("What was the total amount"));
        assert!(log.pairs[3].question.text.contains("define an employee"));
        assert!(!log.terminated_early);
        assert_eq!(h.provider.calls(ids::FOLLOWUP_CHECK), 0);
    }

    #[test]
    fn more_than_six_is_truncated() {
        let text: String = (1..=8).map(|i| format!("QUESTION {i}: q{i}?\n")).collect();
        let h = harness(&text);
        let log = run_subq(&h.ctx(), &mm(), &[], &ReasonerConfig::default()).unwrap();
        assert_eq!(log.len(), 6);
        assert_eq!(log.pairs[5].question.text, "q6?");
    }

    #[test]
    fn no_questions_is_an_error() {
        let h = harness("I cannot think of any.");
        let err = run_subq(&h.ctx(), &mm(), &[], &ReasonerConfig::default()).unwrap_err();
        assert!(matches!(err, PipelineError::EmptyQuestionSet));
    }

    #[test]
    fn answers_never_feed_other_questions() {
        let h = harness("QUESTION 1: a?\nQUESTION 2: b?\nQUESTION 3: c?");
        let log = run_subq(&h.ctx(), &mm(), &[], &ReasonerConfig::default()).unwrap();
        for b in h.provider.bindings_for(ids::WEB_ANSWER) {
            for p in &log.pairs {
                if b["question"] != p.question.text {
                    assert!(!b["question"].contains(&p.answer));
                }
            }
        }
        let gen = &h.provider.bindings_for(ids::SUBQ_QUESTIONS)[0];
        assert_eq!(
            gen.keys().collect::<Vec<_>>(),
            ["claim", "image_context", "max_questions"]
        );
    }
}
