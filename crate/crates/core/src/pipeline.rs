//! Conversations → feature rows → classifier, with the shared resources in one place.

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{Conversation, Label};
use crate::eval::EvalError;
use crate::features::{build_feature_space, FeatureError, FeatureSpace, NgramConfig, Vectorizer};
use crate::lexicons::{EmoLexicon, VadLexicon};
use crate::model::{Classifier, ModelError, ModelSpec, NUM_CLASSES};
use crate::preprocess::{Preprocessor, TokenizedConversation};
use crate::providers::{conversation_scores, ProviderError, ScoreProvider};
use crate::sparse::FeatureVector;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("conversation {0:?} has no label")]
    MissingLabel(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Default)]
pub struct Pipeline {
    pub preprocessor: Preprocessor,
    pub vad: VadLexicon,
    pub emo: EmoLexicon,
}

/// Collect per-item results, reporting the first failure in input order.
fn first_error<T, E>(results: Vec<Result<T, E>>) -> Result<Vec<T>, E> {
    results.into_iter().collect()
}

impl Pipeline {
    pub fn prepare(&self, convs: &[Conversation]) -> Vec<TokenizedConversation> {
        convs.par_iter().map(|c| self.preprocessor.process(c)).collect()
    }

    pub fn build_space(&self, tokenized: &[TokenizedConversation], cfg: &NgramConfig) -> Result<FeatureSpace, PipelineError> {
        Ok(build_feature_space(tokenized, cfg)?)
    }

    /// One row per conversation; neural scores come from `provider` on the raw turns.
    pub fn featurize(
        &self,
        space: &FeatureSpace,
        convs: &[Conversation],
        tokenized: &[TokenizedConversation],
        provider: &dyn ScoreProvider,
    ) -> Result<Vec<FeatureVector>, PipelineError> {
        let vectorizer = Vectorizer {
            space,
            vad: &self.vad,
            emo: &self.emo,
            tokenizer: &self.preprocessor.tokenizer,
        };
        let results: Vec<Result<FeatureVector, PipelineError>> = convs
            .par_iter()
            .zip(tokenized)
            .map(|(conv, tok)| {
                let neural = conversation_scores(provider, conv)?;
                Ok(vectorizer.vectorize(tok, &neural)?)
            })
            .collect();
        first_error(results)
    }

    /// Build the space on `train`, vectorize it and fit `spec`.
    pub fn fit(
        &self,
        train: &[Conversation],
        cfg: &NgramConfig,
        spec: &ModelSpec,
        provider: &dyn ScoreProvider,
    ) -> Result<(FeatureSpace, Classifier), PipelineError> {
        let labels = labels(train)?;
        let tokenized = self.prepare(train);
        let space = self.build_space(&tokenized, cfg)?;
        let rows = self.featurize(&space, train, &tokenized, provider)?;
        let model = spec.train(&rows, &labels)?;
        Ok((space, model))
    }

    pub fn predict_probas(
        &self,
        model: &Classifier,
        space: &FeatureSpace,
        convs: &[Conversation],
        provider: &dyn ScoreProvider,
    ) -> Result<Vec<[f64; NUM_CLASSES]>, PipelineError> {
        if model.dimension() != space.dimension() {
            return Err(ModelError::DimensionMismatch {
                expected: model.dimension(),
                found: space.dimension(),
            }
            .into());
        }
        let tokenized = self.prepare(convs);
        let rows = self.featurize(space, convs, &tokenized, provider)?;
        predict_rows(model, &rows)
    }
}

pub fn predict_rows(model: &Classifier, rows: &[FeatureVector]) -> Result<Vec<[f64; NUM_CLASSES]>, PipelineError> {
    let results: Vec<Result<[f64; NUM_CLASSES], PipelineError>> =
        rows.par_iter().map(|x| Ok(model.predict_proba(x)?)).collect();
    first_error(results)
}

/// Gold labels, failing on the first unlabelled conversation.
pub fn labels(convs: &[Conversation]) -> Result<Vec<Label>, PipelineError> {
    convs
        .iter()
        .map(|c| c.label.ok_or_else(|| PipelineError::MissingLabel(c.id.clone())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{argmax_label, micro_f1};
    use crate::model::GbdtParams;
    use crate::providers::ConstantProvider;
    use crate::synthetic::planted_corpus;

    #[test]
    fn planted_corpus_end_to_end() {
        let corpus = planted_corpus(800, 3);
        let (train, test) = corpus.split_at(600);
        let pipeline = Pipeline::default();
        let spec = ModelSpec::Gbdt(GbdtParams {
            rounds: 40,
            ..Default::default()
        });
        let provider = ConstantProvider::zeros();
        let (space, model) = pipeline.fit(train, &NgramConfig::default(), &spec, &provider).unwrap();
        let probas = pipeline.predict_probas(&model, &space, test, &provider).unwrap();
        let preds: Vec<Label> = probas.iter().map(argmax_label).collect();
        let report = micro_f1(&labels(test).unwrap(), &preds).unwrap();
        assert!(report.micro.f1 > 0.9, "{}", report.to_text());
    }

    #[test]
    fn unlabelled_training_data_is_rejected() {
        let convs = vec![Conversation::new("x", ["a", "b", "c"], None)];
        assert!(matches!(labels(&convs), Err(PipelineError::MissingLabel(ref id)) if id == "x"));
    }
}
