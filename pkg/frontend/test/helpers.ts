/** Shared test plumbing: fixture loading and a replaying fetch stub.
 *
 * Fixtures under `fixtures/recorded/` are byte-for-byte responses from a
 * live backend session; tests replay them so every displayed number can
 * be traced to something the service actually said.
 */

import { readFileSync } from "node:fs";

export function fixtureText(name: string): string {
  return readFileSync(
    new URL(`./fixtures/recorded/${name}`, import.meta.url),
    "utf8",
  );
}

export function fixture<T>(name: string): T {
  return JSON.parse(fixtureText(name)) as T;
}

export interface Recorded {
  status: number;
  body: unknown;
}

/** Fetch stub keyed by "METHOD path"; a route may be a single response
 * or a sequence consumed one call per request (last one repeats). */
export function recordedFetch(
  routes: Record<string, Recorded | Recorded[]>,
): (url: string, init?: RequestInit) => Promise<Response> {
  const cursors = new Map<string, number>();
  return (url, init) => {
    const key = `${init?.method ?? "GET"} ${url}`;
    const route = routes[key];
    if (route === undefined) {
      return Promise.resolve(
        new Response(JSON.stringify({ detail: "Not Found" }), { status: 404 }),
      );
    }
    let hit: Recorded;
    if (Array.isArray(route)) {
      const i = cursors.get(key) ?? 0;
      hit = route[Math.min(i, route.length - 1)]!;
      cursors.set(key, i + 1);
    } else {
      hit = route;
    }
    return Promise.resolve(
      new Response(JSON.stringify(hit.body), { status: hit.status }),
    );
  };
}
