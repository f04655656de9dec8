import type { SessionDescriptor } from "../src/types.js";

export const ANCHORS: Record<string, Record<string, string>> = {
  OVRL: { "1": "Bad", "2": "Poor", "3": "Fair", "4": "Good", "5": "Excellent" },
  SIG: {
    "1": "Very distorted",
    "2": "Fairly distorted",
    "3": "Somewhat distorted",
    "4": "Slightly distorted",
    "5": "Not distorted",
  },
  BAK: {
    "1": "Very intrusive",
    "2": "Somewhat intrusive",
    "3": "Noticeable but not intrusive",
    "4": "Slightly noticeable",
    "5": "Not noticeable",
  },
};

export function makeDescriptor(part: 1 | 2 = 1, pages = 8): SessionDescriptor {
  const metrics = part === 1 ? ["OVRL"] : ["SIG", "BAK"];
  return {
    session_id: "p1-test",
    part,
    metrics,
    scale: { min: 1, max: 5 },
    anchors: Object.fromEntries(metrics.map((m) => [m, ANCHORS[m] ?? {}])),
    tasks: Array.from({ length: pages }, (_, i) => ({
      excerpt_id: `ex${i}`,
      training: i === 0,
      mixture_url: `/api/audio/ex${i}/mix`,
      stimuli: [
        { stimulus_id: `tok${i}a`, url: `/api/audio/ex${i}/tok${i}a` },
        { stimulus_id: `tok${i}b`, url: `/api/audio/ex${i}/tok${i}b` },
      ],
    })),
  };
}

export function jsonResponse(doc: unknown, status = 200): Response {
  return new Response(JSON.stringify(doc), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}
