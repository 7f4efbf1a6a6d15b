use std::sync::Arc;

use super::Operator;
use crate::error::Result;
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct Add;

impl Operator for Add {
    fn name(&self) -> &'static str {
        "add"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        inputs[0].add(inputs[1])
    }

    fn backward(
        &self,
        _inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor>>> {
        Ok(vec![Some(grad.clone()), Some(grad.clone())])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Sub;

impl Operator for Sub {
    fn name(&self) -> &'static str {
        "sub"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        inputs[0].sub(inputs[1])
    }

    fn backward(
        &self,
        _inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor>>> {
        Ok(vec![Some(grad.clone()), Some(grad.scale(-1.0))])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Mul;

impl Operator for Mul {
    fn name(&self) -> &'static str {
        "mul"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        inputs[0].mul(inputs[1])
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor>>> {
        let ga = if needs[0] { Some(grad.mul(inputs[1])?) } else { None };
        let gb = if needs[1] { Some(grad.mul(inputs[0])?) } else { None };
        Ok(vec![ga, gb])
    }
}

/// Sum of all elements into a `(1, 1, 1, 1)` scalar.
#[derive(Debug, Clone, Copy)]
pub struct SumAll;

impl Operator for SumAll {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        Ok(Tensor::scalar(inputs[0].sum()))
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor>>> {
        Ok(vec![Some(Tensor::full(inputs[0].shape(), grad.data()[0]))])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Scale(pub f64);

impl Operator for Scale {
    fn name(&self) -> &'static str {
        "scale"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        Ok(inputs[0].scale(self.0))
    }

    fn backward(
        &self,
        _inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor>>> {
        Ok(vec![Some(grad.scale(self.0))])
    }
}

/// `sum(x * w)` for a fixed weight tensor `w`; turns any output into a scalar
/// probe for gradient checks.
#[derive(Debug, Clone)]
pub struct WeightedSum(pub Arc<Tensor>);

impl Operator for WeightedSum {
    fn name(&self) -> &'static str {
        "weighted_sum"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let prod = inputs[0].mul(&self.0)?;
        Ok(Tensor::new(Shape::scalar(), prod.sum())?)
    }

    fn backward(
        &self,
        _inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor>>> {
        Ok(vec![Some(self.0.scale(grad.data()[0]))])
    }
}
