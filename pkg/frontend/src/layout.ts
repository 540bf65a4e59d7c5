/** Seeded force-directed layout. Deterministic for a fixed graph and seed
 * (reproducible screenshots); no dependency on Math.random. */

export interface Point {
  x: number;
  y: number;
}

export interface LayoutOptions {
  width: number;
  height: number;
  seed: number;
  iterations?: number;
}

/** Small, fast 32-bit PRNG (mulberry32); returns floats in [0, 1). */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/**
 * Fruchterman–Reingold style layout: pairwise repulsion, spring attraction
 * along edges, a mild pull toward the center, and a cooling step cap.
 * Node order matters for determinism, so callers must pass a stable order.
 */
export function forceLayout(
  nodeIds: string[],
  edges: [string, string][],
  opts: LayoutOptions,
): Map<string, Point> {
  const { width, height, seed } = opts;
  const iterations = opts.iterations ?? 300;
  const n = nodeIds.length;
  const pos = new Map<string, Point>();
  if (n === 0) return pos;

  const rand = mulberry32(seed);
  const xs = new Float64Array(n);
  const ys = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    xs[i] = (0.1 + 0.8 * rand()) * width;
    ys[i] = (0.1 + 0.8 * rand()) * height;
  }

  const index = new Map(nodeIds.map((id, i) => [id, i]));
  const springs: [number, number][] = [];
  for (const [a, b] of edges) {
    const ia = index.get(a);
    const ib = index.get(b);
    if (ia !== undefined && ib !== undefined && ia !== ib) springs.push([ia, ib]);
  }

  const k = Math.sqrt((width * height) / n); // ideal edge length
  const dx = new Float64Array(n);
  const dy = new Float64Array(n);

  for (let iter = 0; iter < iterations; iter++) {
    dx.fill(0);
    dy.fill(0);

    for (let i = 0; i < n; i++) {
      for (let j = i + 1; j < n; j++) {
        let ex = xs[i] - xs[j];
        let ey = ys[i] - ys[j];
        let d2 = ex * ex + ey * ey;
        if (d2 < 1e-8) {
          // coincident points: split deterministically
          ex = 1e-4 * (1 + ((i * 31 + j) % 7));
          ey = 1e-4;
          d2 = ex * ex + ey * ey;
        }
        const f = (k * k) / d2;
        dx[i] += ex * f;
        dy[i] += ey * f;
        dx[j] -= ex * f;
        dy[j] -= ey * f;
      }
    }

    for (const [a, b] of springs) {
      const ex = xs[a] - xs[b];
      const ey = ys[a] - ys[b];
      const d = Math.sqrt(ex * ex + ey * ey) || 1e-4;
      const f = d / k;
      dx[a] -= ex * f;
      dy[a] -= ey * f;
      dx[b] += ex * f;
      dy[b] += ey * f;
    }

    const temp = (0.1 * Math.min(width, height) * (iterations - iter)) / iterations;
    for (let i = 0; i < n; i++) {
      // gentle centering keeps disconnected pieces on screen
      dx[i] += 0.02 * (width / 2 - xs[i]);
      dy[i] += 0.02 * (height / 2 - ys[i]);
      const d = Math.sqrt(dx[i] * dx[i] + dy[i] * dy[i]) || 1e-9;
      const step = Math.min(d, temp);
      xs[i] += (dx[i] / d) * step;
      ys[i] += (dy[i] / d) * step;
      xs[i] = Math.min(width * 0.97, Math.max(width * 0.03, xs[i]));
      ys[i] = Math.min(height * 0.97, Math.max(height * 0.03, ys[i]));
    }
  }

  for (let i = 0; i < n; i++) {
    pos.set(nodeIds[i], { x: xs[i], y: ys[i] });
  }
  return pos;
}
