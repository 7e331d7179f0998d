use crate::arm::JointControl;
use crate::geometry::wrap_angle;
use crate::physics::Twist2;
use crate::transit::{dist as joint_dist, JointPath};
use crate::world::SystemState;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub state: SystemState,
    /// Global index of the parent; `None` for roots.
    pub parent: Option<usize>,
    pub incoming_twist: Option<Twist2>,
    pub incoming_control: Option<JointControl>,
    pub h_value: f64,
    pub tree_id: usize,
    pub children: usize,
}

impl TreeNode {
    pub fn is_root(&self) -> bool {
        self.parent.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Reach {
    /// Path from the spawn state's arm configuration to the root's.
    Path(JointPath),
    Unreachable,
}

/// Trees sharing one global node index. Nodes are stored in insertion
/// order; `roots[t]` is the index of tree `t`'s root.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Forest {
    pub nodes: Vec<TreeNode>,
    pub roots: Vec<usize>,
    tree_sizes: Vec<usize>,
    pub(crate) reach: Vec<Option<Reach>>,
}

impl Forest {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a tree; returns its id.
    pub fn add_root(&mut self, state: SystemState, h_value: f64) -> usize {
        let tree_id = self.roots.len();
        self.roots.push(self.nodes.len());
        self.tree_sizes.push(1);
        self.reach.push(None);
        self.nodes.push(TreeNode {
            state,
            parent: None,
            incoming_twist: None,
            incoming_control: None,
            h_value,
            tree_id,
            children: 0,
        });
        tree_id
    }

    /// Appends a child of `parent`; returns its global index.
    pub fn add_child(
        &mut self,
        parent: usize,
        state: SystemState,
        twist: Twist2,
        control: JointControl,
        h_value: f64,
    ) -> usize {
        let tree_id = self.nodes[parent].tree_id;
        self.nodes[parent].children += 1;
        self.tree_sizes[tree_id] += 1;
        self.nodes.push(TreeNode {
            state,
            parent: Some(parent),
            incoming_twist: Some(twist),
            incoming_control: Some(control),
            h_value,
            tree_id,
            children: 0,
        });
        self.nodes.len() - 1
    }

    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_trees(&self) -> usize {
        self.roots.len()
    }

    pub fn tree_size(&self, t: usize) -> usize {
        self.tree_sizes[t]
    }

    pub fn root_of(&self, node: usize) -> usize {
        self.roots[self.nodes[node].tree_id]
    }

    /// Node indices from the root of `node`'s tree down to `node`.
    pub fn trace_to_root(&self, node: usize) -> Vec<usize> {
        let mut out = vec![node];
        let mut i = node;
        while let Some(p) = self.nodes[i].parent {
            out.push(p);
            i = p;
        }
        out.reverse();
        out
    }

    /// Node closest to `q` under [`distance`]; ties go to the earliest node.
    pub fn nearest(&self, q: &SystemState, weights: &[f64; 3]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, n) in self.nodes.iter().enumerate() {
            let d = distance(&n.state, q, weights);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    /// Non-root nodes without children.
    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| !n.is_root() && n.children == 0)
            .map(|(i, _)| i)
    }
}

/// Weighted state distance: joint-space Euclidean for the arm, planar
/// Euclidean per object and wrapped angle difference per object.
pub fn distance(a: &SystemState, b: &SystemState, weights: &[f64; 3]) -> f64 {
    let [w_arm, w_obj, w_theta] = *weights;
    let mut pos = 0.0;
    let mut ang = 0.0;
    for (oa, ob) in a.objects.iter().zip(&b.objects) {
        pos += (oa.pose.x - ob.pose.x).hypot(oa.pose.y - ob.pose.y);
        ang += wrap_angle(oa.pose.theta - ob.pose.theta).abs();
    }
    w_arm * joint_dist(&a.arm, &b.arm) + w_obj * pos + w_theta * ang
}
