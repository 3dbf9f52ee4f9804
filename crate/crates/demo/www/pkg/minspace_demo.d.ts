/* tslint:disable */
/* eslint-disable */

/**
 * Mean fraction of affine spaces minimized for each `(r, n)` cell, plus the
 * rank correlation of fraction against `r` for each `n`.
 */
export function fraction_grid(r_values: Uint32Array, n_values: Uint32Array, trials: number, seed: bigint): string;

/**
 * Projects `(x, y)` onto the polyhedron. With `trace` every affine space is
 * examined and the per-space cone records are included.
 */
export function project(polyhedron_json: string, x: number, y: number, schedule_kind: string, trace: boolean): string;

/**
 * Every nearest point of a union of boxes, given as `[[x0,y0,x1,y1],...]`.
 */
export function project_boxes(boxes_json: string, x: number, y: number): string;

/**
 * `r` random half-planes `⟨v, x⟩ ≤ 1`.
 */
export function random_polygon(r: number, seed: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly fraction_grid: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number, number];
    readonly project: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly project_boxes: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly random_polygon: (a: number, b: bigint) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
