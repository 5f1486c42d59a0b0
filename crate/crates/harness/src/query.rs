//! JSON bound requests for the `bound` subcommand.

use cpsize::bounds::{
    bound_classification, bound_corollary1, bound_regression, bound_theorem1, BoundQuery, BoundResult, SlackMode,
    SlackSpec, TailMode,
};
use cpsize::cdf_models::CdfEstimate;
use cpsize::scores::GammaDensity;
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum BoundRequest {
    Classification {
        p_tr_hat: f64,
        k: usize,
        n_cal: usize,
        alpha: f64,
        slack: SlackMode<f64>,
        n_tr: usize,
    },
    Regression {
        cdf: CdfEstimate<f64>,
        p: f64,
        b_l: f64,
        b_u: f64,
        n_cal: usize,
        alpha: f64,
        slack: SlackMode<f64>,
        n_tr: usize,
        #[serde(default)]
        tail_mode: TailMode,
    },
    Theorem1(GeneralRequest),
    Corollary1(GeneralRequest),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralRequest {
    pub n_tr: usize,
    pub n_cal: usize,
    pub alpha: f64,
    pub cdf: CdfEstimate<f64>,
    pub gamma: GammaDensity<f64>,
    pub slack: SlackMode<f64>,
    pub r_max: f64,
    #[serde(default)]
    pub tail_mode: TailMode,
}

impl GeneralRequest {
    fn query(&self) -> Result<BoundQuery<f64>> {
        Ok(BoundQuery {
            n_tr: self.n_tr,
            n_cal: self.n_cal,
            alpha: self.alpha,
            cdf: self.cdf.clone(),
            gamma: self.gamma.clone(),
            slack: SlackSpec::resolve(self.slack, self.n_tr)?,
            r_max: self.r_max,
            tail_mode: self.tail_mode,
        })
    }
}

pub fn evaluate(req: &BoundRequest) -> Result<BoundResult<f64>> {
    Ok(match req {
        BoundRequest::Classification {
            p_tr_hat,
            k,
            n_cal,
            alpha,
            slack,
            n_tr,
        } => bound_classification(*p_tr_hat, *k, *n_cal, *alpha, &SlackSpec::resolve(*slack, *n_tr)?)?,
        BoundRequest::Regression {
            cdf,
            p,
            b_l,
            b_u,
            n_cal,
            alpha,
            slack,
            n_tr,
            tail_mode,
        } => bound_regression(
            cdf,
            *p,
            *b_l,
            *b_u,
            *n_cal,
            *alpha,
            &SlackSpec::resolve(*slack, *n_tr)?,
            *n_tr,
            *tail_mode,
        )?,
        BoundRequest::Theorem1(g) => bound_theorem1(&g.query()?)?,
        BoundRequest::Corollary1(g) => bound_corollary1(&g.query()?)?,
    })
}
