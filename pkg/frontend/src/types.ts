// Wire types for the listening-test service API.

export interface StimulusRef {
  stimulus_id: string;
  url: string;
}

export interface TaskDescriptor {
  excerpt_id: string;
  training: boolean;
  mixture_url: string;
  stimuli: StimulusRef[];
}

export interface SessionDescriptor {
  session_id: string;
  part: number;
  metrics: string[];
  scale: { min: number; max: number };
  anchors: Record<string, Record<string, string>>;
  tasks: TaskDescriptor[];
}

export interface RatingEntry {
  stimulus_id: string;
  metric: string;
  value: number;
}

export interface RatingSubmission {
  session_id: string;
  excerpt_id: string;
  ratings: RatingEntry[];
}

export interface MosGroupDoc {
  condition: string;
  metric: string;
  source_type: string;
  mean: number;
  std: number;
  n: number;
}

export interface MosSummaryDoc {
  groups: MosGroupDoc[];
  notes: string[];
}
