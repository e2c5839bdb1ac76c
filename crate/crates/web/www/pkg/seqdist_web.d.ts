/* tslint:disable */
/* eslint-disable */

/**
 * Compares the counts that a repeated argmax, i.i.d. sampling and
 * largest-remainder apportionment give for the same distribution.
 * `weights` is a comma-separated list; it is normalised first.
 */
export function apportion(weights: string, n: number, seed: number): string;

/**
 * Generates one synthetic sequence and returns its drift curve and
 * staticity. `kind` is `exchangeable`, `markov`, `drift` or `cycle`.
 */
export function drift(kind: string, length: number, window: number, stride: number, seed: number): string;

/**
 * The bounded-swap shuffle of `0..length` with width `w` (`-1` = full).
 */
export function shuffle(length: number, w: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly apportion: (a: number, b: number, c: number, d: number) => [number, number];
    readonly drift: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly shuffle: (a: number, b: number, c: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
