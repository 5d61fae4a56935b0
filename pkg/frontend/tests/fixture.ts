/** Recorded five-event stream: four running checkpoints plus the terminal. */
export const FIXTURE = [
  'data: {"session":"q1","leaves_visited":1,"bsf_ids":[42],"bsf_distances":[3.2],"state":"running","point_estimate":2.6,"lower_bound":1.9,"upper_bound":3.2,"error_upper_bound":0.68,"p_exact":0.41,"tau_leaves":48}',
  'data: {"session":"q1","leaves_visited":4,"bsf_ids":[42],"bsf_distances":[2.8],"state":"running","point_estimate":2.5,"lower_bound":2.0,"upper_bound":2.8,"error_upper_bound":0.4,"p_exact":0.55,"tau_leaves":48}',
  'data: {"session":"q1","leaves_visited":16,"bsf_ids":[7],"bsf_distances":[2.4],"state":"running","point_estimate":2.3,"lower_bound":2.1,"upper_bound":2.4,"error_upper_bound":0.14,"p_exact":0.82,"tau_leaves":48}',
  'data: {"session":"q1","leaves_visited":48,"bsf_ids":[7],"bsf_distances":[2.35],"state":"running","point_estimate":2.32,"lower_bound":2.2,"upper_bound":2.35,"error_upper_bound":0.07,"p_exact":0.97,"tau_leaves":48}',
  'data: {"session":"q1","leaves_visited":64,"bsf_ids":[7],"bsf_distances":[2.35],"state":"finished"}',
];
