//! Binary regression trees shared by the BART sampler and the CART
//! residual diagnostic.

/// A regression tree node: either an internal decision rule or a leaf value.
/// Rows with `x[split_var] < cutpoint` go left, the rest go right.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Branch {
        split_var: usize,
        cutpoint: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
    },
}

impl TreeNode {
    pub fn leaf(value: f64) -> Self {
        Self::Leaf { value }
    }

    pub fn branch(split_var: usize, cutpoint: f64, left: TreeNode, right: TreeNode) -> Self {
        Self::Branch {
            split_var,
            cutpoint,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Self::Leaf { .. })
    }

    /// Route one row to its leaf value.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            Self::Leaf { value } => *value,
            Self::Branch {
                split_var,
                cutpoint,
                left,
                right,
            } => {
                if row[*split_var] < *cutpoint {
                    left.predict_row(row)
                } else {
                    right.predict_row(row)
                }
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        match self {
            Self::Leaf { .. } => 1,
            Self::Branch { left, right, .. } => left.num_leaves() + right.num_leaves(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Self::Leaf { .. } => 0,
            Self::Branch { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Indented text rendering.
    pub fn render_text(&self, feature_names: &[String]) -> String {
        let mut out = String::new();
        self.render_text_into(feature_names, 0, &mut out);
        out
    }

    fn render_text_into(&self, names: &[String], indent: usize, out: &mut String) {
        let pad = "  ".repeat(indent);
        match self {
            Self::Leaf { value } => {
                out.push_str(&format!("{pad}leaf value={value:.6}\n"));
            }
            Self::Branch {
                split_var,
                cutpoint,
                left,
                right,
            } => {
                let name = names
                    .get(*split_var)
                    .cloned()
                    .unwrap_or_else(|| format!("x{split_var}"));
                out.push_str(&format!("{pad}if {name} < {cutpoint:.6}:\n"));
                left.render_text_into(names, indent + 1, out);
                out.push_str(&format!("{pad}else:\n"));
                right.render_text_into(names, indent + 1, out);
            }
        }
    }

    /// Graphviz DOT rendering.
    pub fn render_dot(&self, feature_names: &[String]) -> String {
        let mut out = String::from("digraph tree {\n  node [shape=box];\n");
        let mut counter = 0usize;
        self.render_dot_into(feature_names, &mut counter, &mut out);
        out.push_str("}\n");
        out
    }

    fn render_dot_into(&self, names: &[String], counter: &mut usize, out: &mut String) -> usize {
        let id = *counter;
        *counter += 1;
        match self {
            Self::Leaf { value } => {
                out.push_str(&format!("  n{id} [label=\"{value:.4}\"];\n"));
            }
            Self::Branch {
                split_var,
                cutpoint,
                left,
                right,
            } => {
                let name = names
                    .get(*split_var)
                    .cloned()
                    .unwrap_or_else(|| format!("x{split_var}"));
                out.push_str(&format!("  n{id} [label=\"{name} < {cutpoint:.4}\"];\n"));
                let l = left.render_dot_into(names, counter, out);
                let r = right.render_dot_into(names, counter, out);
                out.push_str(&format!("  n{id} -> n{l} [label=\"yes\"];\n"));
                out.push_str(&format!("  n{id} -> n{r} [label=\"no\"];\n"));
            }
        }
        id
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_tree() -> TreeNode {
        TreeNode::branch(0, 0.5, TreeNode::leaf(-1.0), TreeNode::leaf(1.0))
    }

    #[test]
    fn routing_follows_cutpoint() {
        let t = step_tree();
        assert_eq!(t.predict_row(&[0.2]), -1.0);
        assert_eq!(t.predict_row(&[0.5]), 1.0);
        assert_eq!(t.predict_row(&[0.9]), 1.0);
    }

    #[test]
    fn counts_and_depth() {
        let t = step_tree();
        assert_eq!(t.num_leaves(), 2);
        assert_eq!(t.depth(), 1);
        assert!(!t.is_leaf());
        assert!(TreeNode::leaf(0.0).is_leaf());
    }

    #[test]
    fn renders_mention_split() {
        let t = step_tree();
        let names = vec!["age".to_string()];
        let text = t.render_text(&names);
        assert!(text.contains("if age < 0.5"));
        let dot = t.render_dot(&names);
        assert!(dot.starts_with("digraph tree"));
        assert!(dot.contains("age < 0.5"));
    }
}
